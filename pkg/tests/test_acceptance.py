"""Acceptance criteria 1-12, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the pytest terminal summary.
The Monte Carlo criteria run at full scale, so this module takes a few minutes.
"""

import math
import subprocess
import sys

import numpy as np
import pytest

from nsd import nft
from nsd.analytics import InputEnsemble, example1_ratio, gordon_haus_order, table3_ensemble
from nsd.harness import ExperimentConfig, run_experiment
from nsd.ssfm import PropagationConfig, propagate
from nsd.units import FiberParams, normalize, power_to_beta
from nsd.waveform import SolitonSpec, default_grid, make_nsoliton, make_soliton

UNITS = normalize(FiberParams())
EPS2 = UNITS.eps2
BETA_T3 = 0.028


def summary(res):
    return "; ".join(f"{r.name} z={r.z:+.2f}" if r.z is not None else r.name for r in res.reports)


def rel_summary(res):
    return "; ".join(f"{r.name} rel={abs(r.estimate / r.analytic - 1):.3f}" for r in res.reports)


def test_criterion_01_eps2(criterion):
    ok = abs(EPS2 / 1.339e-9 - 1) <= 1e-3
    assert criterion(1, ok, f"eps2 = {EPS2:.5e} (target 1.339e-9 within 0.1%)")


def test_criterion_02_example1(criterion):
    r1, r2 = example1_ratio(0.8e-3), example1_ratio(2.5e-3)
    ok = abs(r1 / 103.45 - 1) <= 0.02 and abs(r2 / 1010.27 - 1) <= 0.02
    assert criterion(2, ok, f"r(0.8 mW) = {r1:.2f} (103.45), r(2.5 mW) = {r2:.2f} (1010.27), 2%")


def test_criterion_03_table3_beta(criterion):
    b = power_to_beta(0.8e-3, UNITS, 7.0)
    assert criterion(3, abs(b / BETA_T3 - 1) <= 0.01, f"b = {b:.5f} (0.028 within 1%)")


def random_spec(rng):
    zeta = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.05, 1.5))
    return SolitonSpec.from_center(zeta, rng.uniform(-2, 2), rng.uniform(-math.pi, math.pi))


def test_criterion_04_nft_roundtrip(criterion):
    rng = np.random.default_rng(2024)
    n = 2**14
    err_z = err_q = 0.0
    cases = [[random_spec(rng)] for _ in range(200)] + [[random_spec(rng), random_spec(rng)] for _ in range(20)]
    for specs in cases:
        sig = make_nsoliton(specs, 0.0, default_grid(specs, n_min=n, n_max=n))
        found = nft.find_discrete_spectrum(sig, count=len(specs))
        for s in specs:
            i = int(np.argmin([abs(z - s.zeta) for z in found.zetas]))
            err_z = max(err_z, abs(found.zetas[i] - s.zeta))
            err_q = max(err_q, abs(abs(found.q_ds[i]) / abs(s.q_d) - 1))
    ok = err_z < 1e-6 and err_q < 1e-4
    assert criterion(4, ok, f"max |d zeta| = {err_z:.2e} (<1e-6), max rel d|Q| = {err_q:.2e} (<1e-4), "
                            "200 solitons + 20 2-solitons at n = 2^14")


def test_criterion_05_noiseless_evolution(criterion):
    # second-order splitting: the colliding 2-soliton needs dz = 5e-4 for 1e-6 drift
    z, dz = 5.0, 5e-4
    cases = [[SolitonSpec.from_center(0.3 + 0.5j, -3.0, 0.2)],
             [SolitonSpec.from_center(-0.2 + 0.4j, 3.0), SolitonSpec.from_center(0.25 + 0.6j, -3.0, 1.0)]]
    drift_z = drift_q = 0.0
    for specs in cases:
        grid = default_grid(specs, n_min=2048)
        sig = make_nsoliton(specs, 0.0, grid)
        out = propagate(sig, PropagationConfig(dz=dz, total_z=z))
        found = nft.find_discrete_spectrum(out, count=len(specs))
        ref = nft.evolve_spectrum(nft.DiscreteSpectrum.from_specs(specs), z)
        for (z0, q0), (z1, q1) in zip(ref.entries, found.entries):
            drift_z = max(drift_z, abs(z1 - z0))
            drift_q = max(drift_q, abs(math.log(abs(q1)) - math.log(abs(q0))))
    ok = drift_z < 1e-6 and drift_q < 1e-4
    assert criterion(5, ok, f"eigenvalue drift {drift_z:.2e} (<1e-6), ln|Q| drift {drift_q:.2e} (<1e-4)")


@pytest.fixture(scope="module")
def point_run():
    cfg = ExperimentConfig(
        mode="sde", trials=100_000, block_size=10_000, seed=7, ensemble=InputEnsemble.point(0.0, BETA_T3, 0.0),
        eps2=EPS2, length=7000.0, n_steps=1000,
        checks=("mean_ups_R", "mean_ups_I", "m2_ups_R", "m2_ups_I", "cov_ups_R_ups_I", "lemma1_R2nu",
                "lemma1_fourth", "lemma2_R_I", "lemma2_R_RI", "var_N"))
    res = run_experiment(cfg)
    return {r.name: r for r in res.reports}


def test_criterion_06_eigen_moments(point_run, criterion):
    reps = [point_run[k] for k in ("mean_ups_R", "mean_ups_I", "m2_ups_R", "m2_ups_I")]
    ok = all(abs(r.z) <= 3 for r in reps)
    assert criterion(6, ok, "; ".join(f"{r.name} z={r.z:+.2f}" for r in reps) + " (|z|<=3, M=1e5)")


def test_criterion_07_theorem3_lemmas(point_run, criterion):
    reps = [point_run[k] for k in ("cov_ups_R_ups_I", "lemma1_R2nu", "lemma1_fourth", "lemma2_R_I", "lemma2_R_RI")]
    ok = all(abs(r.z) <= 3 for r in reps)
    assert criterion(7, ok, "; ".join(f"{r.name} z={r.z:+.2f}" for r in reps) + " (|z|<=3, M=1e5)")


def test_criterion_08_theorem4_variance(point_run, criterion):
    r = point_run["var_N"]
    rel = abs(r.estimate / r.analytic - 1)
    assert criterion(8, rel <= 0.05, f"Var N: MC {r.estimate:.5g} vs closed form {r.analytic:.5g}, "
                                     f"rel {rel:.4f} (<=5%)")


def test_criterion_09_gordon_haus(criterion):
    slope = gordon_haus_order(EPS2, np.geomspace(1e3, 1e4, 21), BETA_T3)
    assert criterion(9, abs(slope - 3.0) <= 0.01, f"log-log slope {slope:.4f} (3.00 +- 0.01)")


def test_criterion_10_section6(criterion):
    cfg = ExperimentConfig(
        mode="sde", trials=100_000, block_size=10_000, seed=8, ensemble=table3_ensemble(BETA_T3),
        eps2=EPS2, length=7000.0, n_steps=1000, freeze_beta=True, advection=False,
        checks=("var_N2", "var_N4", "cov_N1_N3"))
    res = run_experiment(cfg)
    rep = {r.name: r for r in res.reports}
    detail = (f"var_N2 rel={abs(rep['var_N2'].estimate / rep['var_N2'].analytic - 1):.3f}, "
              f"var_N4 rel={abs(rep['var_N4'].estimate / rep['var_N4'].analytic - 1):.3f} (<=10%); "
              f"cov_N1_N3 z={rep['cov_N1_N3'].z:+.2f} (|z|<=3)")
    assert criterion(10, res.passed, detail)


def test_criterion_11_ssfm_cross_check(criterion):
    cfg = ExperimentConfig(
        mode="ssfm", trials=2000, block_size=200, seed=11, ensemble=InputEnsemble.point(0.0, 0.5, 0.0),
        eps2=1e-5, length=50.0, n_steps=2500, checks=("var_ups_R", "var_ups_I", "var_N_model"))
    res = run_experiment(cfg)
    detail = rel_summary(res) + f" (10%, 10%, 15%; {res.trials_ok}/2000 trials ok)"
    assert criterion(11, res.passed, detail)


MC_COMMANDS = [
    ["mc-eigen", "--trials", "2000", "--block-size", "500", "--length", "7000", "--steps", "200"],
    ["mc-amplitude", "--trials", "2000", "--block-size", "500", "--length", "7000", "--steps", "200"],
    ["mc-amplitude", "--section6", "--trials", "2000", "--block-size", "500", "--steps", "200",
     "--ensemble", "{ens}"],
    ["mc-eigen", "--mode", "ssfm", "--trials", "8", "--block-size", "4", "--beta0", "0.5", "--eps2", "1e-5",
     "--length", "5", "--steps", "250"],
    ["mc-amplitude", "--mode", "ssfm", "--trials", "8", "--block-size", "4", "--beta0", "0.5",
     "--eps2", "1e-5", "--length", "5", "--steps", "250"],
]


def test_criterion_12_determinism(tmp_path, criterion):
    half = 1.763 / (4 * BETA_T3)
    ens = tmp_path / "ens.cfg"
    ens.write_text(f"alpha0=0\nbeta0=uniform({0.9 * BETA_T3}, {1.1 * BETA_T3})\nT00=uniform({-half}, {half})\n")
    identical = []
    for k, cmd in enumerate(MC_COMMANDS):
        cmd = [c.format(ens=ens) for c in cmd]
        outs = []
        for rep, threads in enumerate(("1", "1", "2")):
            path = tmp_path / f"out{k}_{rep}.jsonl"
            subprocess.run([sys.executable, "-m", "nsd.cli", *cmd, "--seed", "99", "--threads", threads,
                            "--out", str(path)], check=False, capture_output=True)
            outs.append(path.read_bytes())
        identical.append(bool(outs[0]) and outs[0] == outs[1] == outs[2])
    cfg = PropagationConfig(dz=0.01, total_z=1.0, eps=0.01, seed=99)
    spec = SolitonSpec(0.5j, 1.0)
    sig = make_soliton(spec, 0.0, default_grid([spec]))
    identical.append(propagate(sig, cfg).samples.tobytes() == propagate(sig, cfg).samples.tobytes())
    ok = all(identical)
    assert criterion(12, ok, f"{sum(identical)}/{len(identical)} Monte Carlo commands byte-identical "
                             "on repeat (and across thread counts)")
