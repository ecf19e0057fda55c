"""Monte Carlo experiment runner and mergeable moment estimates."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytics, nft, perturb, ssfm
from .analytics import InputEnsemble, StatReport
from .waveform import SolitonSpec, TimeGrid, make_soliton

MAX_ERROR_FRACTION = 0.01


class ExperimentFailed(RuntimeError):
    pass


# compensated accumulators --------------------------------------------------------

def _two_sum(a: float, b: float):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _exact_sum(values) -> tuple[float, float]:
    """Sum as an unevaluated pair hi + lo (fsum is correctly rounded)."""
    vals = [float(v) for v in values]
    hi = math.fsum(vals)
    lo = math.fsum(vals + [-hi])
    return hi, lo


def _add_pairs(p, q):
    s, e = _two_sum(p[0], q[0])
    lo = (p[1] + q[1]) + e
    hi, lo2 = _two_sum(s, lo)
    return hi, lo2


@dataclass(frozen=True)
class MomentEstimate:
    """Raw power sums of ``x - shift`` up to the 4th power, as compensated pairs."""

    name: str
    shift: float = 0.0
    n: int = 0
    sums: tuple = ((0.0, 0.0),) * 4

    @classmethod
    def from_samples(cls, name: str, x, shift: float = 0.0) -> "MomentEstimate":
        d = np.asarray(x, dtype=float).ravel() - shift
        sums = tuple(_exact_sum(d**k) for k in range(1, 5))
        return cls(name, float(shift), int(d.size), sums)

    def merge(self, other: "MomentEstimate") -> "MomentEstimate":
        if self.name != other.name:
            raise ValueError(f"cannot merge observable {self.name!r} with {other.name!r}")
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        if self.shift != other.shift:
            raise ValueError("cannot merge estimates with different shifts")
        return MomentEstimate(self.name, self.shift, self.n + other.n,
                              tuple(_add_pairs(p, q) for p, q in zip(self.sums, other.sums)))

    def _S(self, k):
        hi, lo = self.sums[k - 1]
        return hi + lo

    @property
    def mean(self) -> float:
        return self.shift + self._S(1) / self.n

    @property
    def variance(self) -> float:
        n = self.n
        if n < 2:
            return 0.0
        s1, s2 = self._S(1), self._S(2)
        return max((s2 - s1 * s1 / n) / (n - 1), 0.0)

    @property
    def stderr_mean(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 1 else math.inf

    @property
    def stderr_var(self) -> float:
        """Jackknife standard error of the unbiased variance, in closed form."""
        n = self.n
        if n < 4:
            return math.inf
        s1, s2, s3, s4 = (self._S(k) for k in range(1, 5))
        # leave-one-out variance is A + B x_i + C x_i^2
        B = 2 * s1 / ((n - 1) * (n - 2))
        C = -n / ((n - 1) * (n - 2))
        ss = B * B * s2 + 2 * B * C * s3 + C * C * s4 - (B * s1 + C * s2) ** 2 / n
        return math.sqrt(max((n - 1) / n * ss, 0.0))


def merge(a: MomentEstimate, b: MomentEstimate) -> MomentEstimate:
    return a.merge(b)


# checks -----------------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    """A named statistic: ``kind`` is 'mean' or 'var' of observable ``obs``."""

    obs: str
    kind: str
    rule: str = "z"
    tol: float = 3.0


CHECKS = {
    "mean_ups_R": Check("ups_R", "mean"),
    "mean_ups_I": Check("ups_I", "mean"),
    "m2_ups_R": Check("ups_R2", "mean"),
    "m2_ups_I": Check("ups_I2", "mean"),
    "var_ups_R": Check("ups_R", "var", "rel", 0.10),
    "var_ups_I": Check("ups_I", "var", "rel", 0.10),
    "cov_ups_R_ups_I": Check("ups_RI", "mean"),
    "lemma1_R2nu": Check("R2nu_s", "mean"),
    "lemma1_fourth": Check("Rnu_s_Rnu_t", "mean"),
    "lemma2_R_I": Check("GR_GI", "mean"),
    "lemma2_R_RI": Check("GR_GRI", "mean"),
    "mean_N": Check("N", "mean"),
    "var_N": Check("N", "var", "rel", 0.05),
    "var_N_model": Check("N", "var", "rel", 0.15),
    "var_N2": Check("N2", "var", "rel", 0.10),
    "var_N4": Check("N4", "var", "rel", 0.10),
    "cov_N1_N3": Check("N1N3", "mean"),
}


@dataclass
class ExperimentConfig:
    mode: str = "sde"
    trials: int = 1000
    block_size: int = 1000
    seed: int = 0
    threads: int = 1
    ensemble: InputEnsemble = field(default_factory=lambda: InputEnsemble.point(0.0, 0.5, 0.0))
    eps2: float = 1e-5
    length: float = 50.0
    n_steps: int = 1000
    checks: tuple = ("mean_ups_R", "mean_ups_I")
    freeze_beta: bool = False
    advection: bool = True
    # time window for ssfm mode; dt = 0.25 keeps the injected noise band
    # (|omega| < 4 pi) well inside first-order perturbation validity while
    # still resolving a beta = 0.5 soliton to machine precision
    grid_width: float = 64.0
    grid_n: int = 256

    def __post_init__(self):
        if self.mode not in ("sde", "ssfm"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trials < 1 or self.block_size < 1:
            raise ValueError("trials and block_size must be positive")
        unknown = [c for c in self.checks if c not in CHECKS]
        if unknown:
            raise ValueError(f"unknown statistics {unknown}; known: {sorted(CHECKS)}")
        if self.mode == "ssfm" and not (self.ensemble.alpha0.is_point and self.ensemble.beta0.is_point
                                        and self.ensemble.T00.is_point):
            raise ValueError("ssfm mode needs a point input")

    @property
    def dz(self) -> float:
        return self.length / self.n_steps

    def propagation(self) -> ssfm.PropagationConfig:
        return ssfm.PropagationConfig(self.dz, self.length, math.sqrt(self.eps2), self.seed)


def analytic_value(name: str, cfg: ExperimentConfig) -> float:
    ens, e, L = cfg.ensemble, cfg.eps2, cfg.length
    b0 = ens.Eb()
    if name in ("mean_ups_R", "lemma2_R_I", "cov_ups_R_ups_I", "lemma1_R2nu", "cov_N1_N3"):
        if name == "cov_N1_N3":
            return analytics.section6_stats(ens, e, L)["Cov13"]
        return 0.0
    m = analytics.eigen_moments(b0, e, L)
    table = {
        "mean_ups_I": m.mean_I,
        "m2_ups_R": m.m2_R,
        "m2_ups_I": m.m2_I,
        "var_ups_R": m.var_R,
        "var_ups_I": m.var_I,
        "lemma1_fourth": analytics.lemma1_fourth(0.5 * L, e, ens.Eb(), ens.Eb(2)),
        "lemma2_R_RI": analytics.lemma2_R_RI(L, e, b0),
    }
    if name in table:
        return table[name]
    if name in ("mean_N", "var_N", "var_N_model"):
        mean, var = analytics.theorem4_stats(ens, e, L)
        return mean if name == "mean_N" else var
    s6 = analytics.section6_stats(ens, e, L)
    return {"var_N2": s6["VarN2"], "var_N4": s6["VarN4"]}[name]


# trial blocks ---------------------------------------------------------------

def _sde_block(cfg: ExperimentConfig, block: int, size: int):
    rng = ssfm.make_rng(cfg.seed, 0, block)
    a0, b0, t00 = cfg.ensemble.sample(rng, size)
    state = perturb.SolitonState(a0, b0, t00, np.zeros(size))
    stride = cfg.n_steps // 2 if cfg.n_steps % 2 == 0 else None
    path = perturb.simulate_soliton_sde(state, cfg.propagation(), trials=size, rng=rng,
                                        record_stride=stride, freeze_beta=cfg.freeze_beta,
                                        advection=cfg.advection)
    ups_R, ups_I = path.ups_R[:, -1], path.ups_I[:, -1]
    nu = path.nu_I
    obs = _eigen_obs(ups_R, ups_I)
    if stride is not None:
        r_s, nu_s = path.ups_R[:, 1], nu[:, 1]
        obs["R2nu_s"] = r_s**2 * nu_s
        obs["Rnu_s_Rnu_t"] = r_s * nu_s * ups_R * nu[:, -1]
    it = path.integrals
    obs["GR_GI"] = it["I_R"] * it["I_I"]
    obs["GR_GRI"] = it["I_R"] * it["I_RI"]
    obs["N"] = perturb.magnitude_channel(path).noise
    comp = perturb.perturbation_model(path)
    obs["N2"] = comp.N2
    obs["N4"] = comp.N4
    obs["N1N3"] = comp.N1 * comp.N3
    return obs, []


def _eigen_obs(ups_R, ups_I):
    return {"ups_R": ups_R, "ups_I": ups_I, "ups_R2": ups_R**2, "ups_I2": ups_I**2,
            "ups_RI": ups_R * ups_I}


def _ssfm_block(cfg: ExperimentConfig, block: int, size: int):
    rng = ssfm.make_rng(cfg.seed, 0, block)
    ens = cfg.ensemble
    beta = ens.beta0.lo
    spec = SolitonSpec.from_center(complex(ens.alpha0.lo, beta), ens.T00.lo)
    grid = TimeGrid.centered(cfg.grid_width, cfg.grid_n)
    sig = make_soliton(spec, 0.0, grid)
    out = ssfm.propagate(sig, cfg.propagation(), rng=rng, batch=size)
    spec_in = nft.DiscreteSpectrum.from_specs([spec])
    calibration = ssfm.grid_calibration(spec_in, grid, cfg.length)
    rows, errors = [], []
    for i in range(size):
        try:
            noise = ssfm.measure_eigen_noise(spec_in, out.with_samples(out.samples[i]),
                                             calibration=calibration)[0]
            rows.append(noise.as_tuple())
        except (ssfm.EigenvalueCountError, nft.RootRefinementFailed, nft.ScatteringOverflow) as exc:
            errors.append((block * cfg.block_size + i, str(exc)))
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    obs = _eigen_obs(arr[:, 0], arr[:, 1])
    obs["N"] = arr[:, 2]
    obs["dphase"] = arr[:, 3]
    return obs, errors


@dataclass
class ExperimentResult:
    reports: list
    estimates: dict
    errors: list
    trials_ok: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.reports)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run all trial blocks and compare the requested statistics to their closed forms.

    Block ``k`` draws from its own counter-based stream (master seed, block
    index), and estimates are merged in block order, so results do not depend
    on the number of threads.
    """
    sizes = [min(cfg.block_size, cfg.trials - s) for s in range(0, cfg.trials, cfg.block_size)]
    worker = _sde_block if cfg.mode == "sde" else _ssfm_block
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            outputs = list(pool.map(lambda kb: worker(cfg, *kb), enumerate(sizes)))
    else:
        outputs = [worker(cfg, k, size) for k, size in enumerate(sizes)]

    errors = [e for _, errs in outputs for e in errs]
    if len(errors) > MAX_ERROR_FRACTION * cfg.trials:
        raise ExperimentFailed(f"{len(errors)} of {cfg.trials} trials failed; first: {errors[0]}")

    needed = sorted({CHECKS[c].obs for c in cfg.checks})
    estimates = {}
    for name in needed:
        # shift by the first block's mean so the power sums stay well conditioned
        first = outputs[0][0][name]
        shift = float(np.mean(first)) if len(first) else 0.0
        est = MomentEstimate(name, shift)
        for obs, _ in outputs:
            est = est.merge(MomentEstimate.from_samples(name, obs[name], shift))
        estimates[name] = est

    reports = []
    for cname in cfg.checks:
        chk = CHECKS[cname]
        est = estimates[chk.obs]
        analytic = analytic_value(cname, cfg)
        value, se = (est.mean, est.stderr_mean) if chk.kind == "mean" else (est.variance, est.stderr_var)
        if chk.rule == "z":
            reports.append(StatReport.compare(cname, analytic, value, se, chk.tol))
        else:
            reports.append(StatReport.relative(cname, analytic, value, chk.tol, se))
    trials_ok = cfg.trials - len(errors)
    return ExperimentResult(reports, estimates, errors, trials_ok)
