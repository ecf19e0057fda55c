import threading

import numpy as np
import pytest

from nsd.nft import (DiscreteSpectrum, RootRefinementFailed, SearchRegion, SpectrumCountMismatch,
                     continuous_spectrum, count_zeros, evolve_spectrum, find_discrete_spectrum, scatter)
from nsd.waveform import Signal, SolitonSpec, TimeGrid, make_nsoliton, make_soliton

from oracles import zs_brute_force


@pytest.fixture(scope="module")
def sech_grid():
    return TimeGrid.centered(60.0, 4096)


def test_free_scattering(sech_grid):
    sig = Signal(sech_grid, np.zeros(sech_grid.n))
    for lam in (0.3, -1.0 + 0.2j, 0.7j):
        sc = scatter(sig, lam)
        assert sc.a == pytest.approx(1.0, abs=1e-12)
        assert abs(sc.b) < 1e-12


def test_satsuma_yajima_eigenvalue(sech_grid):
    sig = Signal(sech_grid, 1.2 / np.cosh(sech_grid.t))
    assert abs(scatter(sig, 0.7j).a) < 1e-4
    # brute-force RK4 oracle at an arbitrary point
    lam = 0.3 + 0.4j
    a_ref, _ = zs_brute_force(lambda t: 1.2 / np.cosh(t), sech_grid.t, lam, substeps=4)
    sc = scatter(sig, lam)
    assert sc.a == pytest.approx(a_ref, abs=1e-8)
    # b is only meaningful on the real axis (and at zeros of a)
    a_ref, b_ref = zs_brute_force(lambda t: 1.2 / np.cosh(t), sech_grid.t, 0.3, substeps=4)
    sc = scatter(sig, 0.3)
    assert sc.a == pytest.approx(a_ref, abs=1e-8)
    assert sc.b == pytest.approx(b_ref, abs=1e-8)
    spec = find_discrete_spectrum(sig, SearchRegion(-1, 1, 0, 2))
    assert len(spec) == 1
    assert spec.zetas[0] == pytest.approx(0.7j, abs=1e-8)


def test_a_prime_matches_finite_difference(sech_grid):
    sig = Signal(sech_grid, 1.7 / np.cosh(sech_grid.t) * np.exp(0.3j * sech_grid.t))
    lam, h = 0.2 + 0.5j, 1e-5
    fd = (scatter(sig, lam + h).a - scatter(sig, lam - h).a) / (2 * h)
    assert scatter(sig, lam).a_prime == pytest.approx(fd, rel=1e-7)


def test_soliton_has_no_continuous_spectrum():
    g = TimeGrid.centered(80.0, 2**14)
    sig = make_soliton(SolitonSpec(0.5j, 1.0), 0.0, g)
    cs = continuous_spectrum(sig, np.linspace(-3, 3, 61))
    assert np.abs(cs.q_c).max() < 1e-4


def test_unimodularity():
    g = TimeGrid.centered(60.0, 4096)
    sig = Signal(g, 0.8 / np.cosh(g.t) * np.exp(1j * g.t**2 / 10))
    for lam in np.linspace(-2, 2, 9):
        sc = scatter(sig, lam)
        assert abs(abs(sc.a) ** 2 + abs(sc.b) ** 2 - 1) < 1e-6


def test_single_soliton_roundtrip():
    g = TimeGrid.centered(80.0, 2**14)
    sig = make_soliton(SolitonSpec(0.5j, 1.0), 0.0, g)
    spec = find_discrete_spectrum(sig)
    assert len(spec) == 1
    assert abs(spec.zetas[0] - 0.5j) < 1e-8
    assert abs(spec.q_ds[0] - 1.0) < 1e-6


def test_zero_signal_empty_spectrum(sech_grid):
    assert len(find_discrete_spectrum(Signal(sech_grid, np.zeros(sech_grid.n)))) == 0


def test_two_soliton_roundtrip():
    specs = [SolitonSpec.from_center(0.25j, -3.0, 0.4), SolitonSpec.from_center(0.75j, 2.0, -1.0)]
    g = TimeGrid.centered(100.0, 2**14)
    sig = make_nsoliton(specs, 0.0, g)
    spec = find_discrete_spectrum(sig, count=2)
    for s, z, q in zip(specs, spec.zetas, spec.q_ds):
        assert abs(z - s.zeta) < 1e-6
        assert abs(q / s.q_d - 1) < 1e-4


def test_count_mismatch_and_refinement_errors(sech_grid):
    sig = make_soliton(SolitonSpec(0.5j, 1.0), 0.0, sech_grid)
    with pytest.raises(SpectrumCountMismatch) as info:
        find_discrete_spectrum(sig, count=2)
    assert len(info.value.found) == 1
    zero = Signal(sech_grid, np.zeros(sech_grid.n))
    with pytest.raises(RootRefinementFailed):
        find_discrete_spectrum(zero, hints=[0.5j], use_contour=False)


def test_count_zeros_nsoliton():
    specs = [SolitonSpec(0.1 + 0.3j, 1.0), SolitonSpec(-0.2 + 0.6j, 1.0), SolitonSpec(0.9j, 1.0)]
    g = TimeGrid.centered(100.0, 4096)
    sig = make_nsoliton(specs, 0.0, g)
    assert count_zeros(sig, SearchRegion(-1, 1, 0, 2)) == 3
    assert count_zeros(sig, SearchRegion(-1, 1, 0.45, 2)) == 2


def test_grid_convergence_second_order():
    spec = SolitonSpec(0.2 + 0.6j, 1.0)
    errs = []
    for n in (512, 1024, 2048):
        sig = make_soliton(spec, 0.0, TimeGrid.centered(60.0, n))
        z = find_discrete_spectrum(sig, hints=[spec.zeta], richardson=False, use_contour=False).zetas[0]
        errs.append(z)
    d1, d2 = abs(errs[1] - errs[0]), abs(errs[2] - errs[1])
    assert d2 < d1 / 4 * 1.1
    assert d2 > d1 / 4 * 0.9


def test_evolve_spectrum():
    spec = DiscreteSpectrum((0.5j,), (1.0,))
    assert evolve_spectrum(spec, 0.0) == spec
    ev = evolve_spectrum(spec, 1.0)
    assert abs(ev.q_ds[0]) == pytest.approx(1.0)
    assert np.angle(ev.q_ds[0]) == pytest.approx(1.0)
    ev = evolve_spectrum(DiscreteSpectrum((0.1 + 0.5j,), (1.0,)), 2.0)
    assert np.log(abs(ev.q_ds[0])) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        evolve_spectrum(spec, -1.0)


def test_spectrum_sorting_and_json(tmp_path):
    spec = DiscreteSpectrum((0.2 + 0.7j, -0.1 + 0.3j, 0.3 + 0.3j), (1, 2j, 3))
    assert spec.zetas == (-0.1 + 0.3j, 0.3 + 0.3j, 0.2 + 0.7j)
    rec = spec.to_records()[0]
    assert set(rec) == {"zeta_re", "zeta_im", "qd_re", "qd_im"}
    spec.to_json(tmp_path / "s.json")
    assert DiscreteSpectrum.from_json(tmp_path / "s.json") == spec
    with pytest.raises(ValueError):
        DiscreteSpectrum((-0.5j,), (1.0,))


def test_search_region_parse():
    r = SearchRegion.parse("re:[-1,1] im:(0,2]")
    assert (r.re_min, r.re_max, r.im_min, r.im_max) == (-1, 1, 0, 2)


def test_concurrent_scatter(sech_grid):
    sig = make_soliton(SolitonSpec(0.3 + 0.5j, 1.0), 0.0, sech_grid)
    lams = [0.1 * k + 0.2j for k in range(8)]
    expected = [scatter(sig, lam) for lam in lams]
    results = [None] * len(lams)

    def work(i):
        results[i] = scatter(sig, lams[i])

    threads = [threading.Thread(target=work, args=(i,)) for i in range(len(lams))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == expected
