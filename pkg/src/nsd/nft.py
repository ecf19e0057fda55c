"""Forward nonlinear Fourier transform for the focusing Zakharov-Shabat problem.

The scattering system ``v_t = [[-j l, q], [-q*, j l]] v`` is integrated with a
piecewise-constant exponential (transfer-matrix) scheme: each sample is the
midpoint of a cell of width ``dt``, and the exact exponential of the cell
matrix is applied. The scheme is unimodular step by step and symmetric, so its
error expands in even powers of ``dt``. By default, one Richardson step
(full grid against every-other-sample grid) lifts it to fourth order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .waveform import Signal

NEWTON_TOL = 1e-10
DEDUP_RADIUS = 1e-6
PEAK_DROP = 5.0


class ScatteringOverflow(ArithmeticError):
    """Scattering data not representable in double precision."""


class SpectrumCountMismatch(RuntimeError):
    """Number of eigenvalues found differs from the expected count."""

    def __init__(self, msg, found):
        super().__init__(msg)
        self.found = found


class RootRefinementFailed(RuntimeError):
    """Newton iteration on a(lambda) did not converge."""

    def __init__(self, msg, last_iterate):
        super().__init__(msg)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class ScatteringCoefficients:
    lam: complex
    a: complex
    b: complex
    a_prime: complex


@dataclass(frozen=True)
class DiscreteSpectrum:
    zetas: tuple = ()
    q_ds: tuple = ()

    def __post_init__(self):
        zetas = tuple(complex(z) for z in self.zetas)
        q_ds = tuple(complex(q) for q in self.q_ds)
        if len(zetas) != len(q_ds):
            raise ValueError("zetas and q_ds must have equal length")
        if any(z.imag <= 0 for z in zetas):
            raise ValueError("discrete eigenvalues must lie in the upper half plane")
        order = sorted(range(len(zetas)), key=lambda i: (zetas[i].imag, zetas[i].real))
        object.__setattr__(self, "zetas", tuple(zetas[i] for i in order))
        object.__setattr__(self, "q_ds", tuple(q_ds[i] for i in order))

    def __len__(self):
        return len(self.zetas)

    @property
    def entries(self):
        return list(zip(self.zetas, self.q_ds))

    @classmethod
    def from_specs(cls, specs, z: float = 0.0) -> "DiscreteSpectrum":
        return cls(tuple(s.zeta for s in specs), tuple(s.q_d_at(z) for s in specs))

    def to_records(self):
        return [{"zeta_re": z.real, "zeta_im": z.imag, "qd_re": q.real, "qd_im": q.imag}
                for z, q in self.entries]

    @classmethod
    def from_records(cls, records) -> "DiscreteSpectrum":
        return cls(tuple(complex(r["zeta_re"], r["zeta_im"]) for r in records),
                   tuple(complex(r["qd_re"], r["qd_im"]) for r in records))

    def to_json(self, path=None):
        text = json.dumps(self.to_records(), indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "DiscreteSpectrum":
        text = str(text_or_path)
        if not text.lstrip().startswith("["):
            text = Path(text).read_text()
        return cls.from_records(json.loads(text))


@dataclass(frozen=True)
class ContinuousSpectrum:
    lambdas: np.ndarray
    q_c: np.ndarray


# kernel ----------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _step_coeffs(qi, lam, h):
    k2 = lam * lam + (qi.real * qi.real + qi.imag * qi.imag)
    x2 = k2 * h * h
    if abs(x2) < 1e-6:
        # series in x^2 = (k h)^2
        c = 1.0 - x2 / 2.0 + x2 * x2 / 24.0
        s = h * (1.0 - x2 / 6.0 + x2 * x2 / 120.0)
        f = -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0
    else:
        k = np.sqrt(k2)
        x = k * h
        c = np.cos(x)
        sx = np.sin(x)
        s = sx / k
        f = (x * c - sx) / (x * x * x)
    dc = -h * lam * s
    ds = lam * h * h * h * f
    return c, s, dc, ds


@njit(cache=True, nogil=True)
def _zs_kernel(q, dt, lam):
    """Split integration of the scattering problem.

    ``u`` is the left Jost solution times exp(j*lam*L), started at (1, 0) and
    integrated forward; ``w`` is the right Jost solution times exp(-j*lam*R),
    started at (0, 1) and integrated backward. Both meet at the cell boundary
    where the forward solution peaks (the right edge for real lam), so neither
    is carried through a region where it is the subdominant mode.
    Returns both states, their lam-derivatives and log scale factors.
    """
    n = q.shape[0]
    h = dt
    u1 = 1.0 + 0j
    u2 = 0.0 + 0j
    d1 = 0.0 + 0j
    d2 = 0.0 + 0j
    logs = 0.0
    grow = lam.imag > 0.0
    best = 0.0
    m = n
    b1 = u1
    b2 = u2
    bd1 = d1
    bd2 = d2
    blogs = 0.0
    tracking = grow
    if grow:
        m = 0
    for i in range(n):
        qi = q[i]
        c, s, dc, ds = _step_coeffs(qi, lam, h)
        e11 = c - 1j * lam * s
        e12 = qi * s
        e21 = -np.conj(qi) * s
        e22 = c + 1j * lam * s
        f11 = dc - 1j * s - 1j * lam * ds
        f12 = qi * ds
        f21 = -np.conj(qi) * ds
        f22 = dc + 1j * s + 1j * lam * ds
        n1 = e11 * d1 + e12 * d2 + f11 * u1 + f12 * u2
        n2 = e21 * d1 + e22 * d2 + f21 * u1 + f22 * u2
        v1 = e11 * u1 + e12 * u2
        v2 = e21 * u1 + e22 * u2
        u1, u2, d1, d2 = v1, v2, n1, n2
        mag = max(abs(u1), abs(u2))
        if mag > 1e100 or mag < 1e-100:
            u1 /= mag
            u2 /= mag
            d1 /= mag
            d2 /= mag
            logs += np.log(mag)
            mag = 1.0
        if grow and tracking:
            lvl = np.log(mag) + logs
            if lvl < best - PEAK_DROP:
                # past the peak: later growth is the contaminating mode
                tracking = False
            elif lvl > best:
                best = lvl
                m = i + 1
                b1, b2, bd1, bd2, blogs = u1, u2, d1, d2, logs
    if not grow:
        b1, b2, bd1, bd2, blogs = u1, u2, d1, d2, logs
    w1 = 0.0 + 0j
    w2 = 1.0 + 0j
    g1 = 0.0 + 0j
    g2 = 0.0 + 0j
    wlogs = 0.0
    for i in range(n - 1, m - 1, -1):
        qi = q[i]
        c, s, dc, ds = _step_coeffs(qi, lam, h)
        e11 = c + 1j * lam * s
        e12 = -qi * s
        e21 = np.conj(qi) * s
        e22 = c - 1j * lam * s
        f11 = dc + 1j * s + 1j * lam * ds
        f12 = -qi * ds
        f21 = np.conj(qi) * ds
        f22 = dc - 1j * s - 1j * lam * ds
        n1 = e11 * g1 + e12 * g2 + f11 * w1 + f12 * w2
        n2 = e21 * g1 + e22 * g2 + f21 * w1 + f22 * w2
        v1 = e11 * w1 + e12 * w2
        v2 = e21 * w1 + e22 * w2
        w1, w2, g1, g2 = v1, v2, n1, n2
        mag = max(abs(w1), abs(w2))
        if mag > 1e100 or mag < 1e-100:
            w1 /= mag
            w2 /= mag
            g1 /= mag
            g2 /= mag
            wlogs += np.log(mag)
    return b1, b2, bd1, bd2, blogs, w1, w2, g1, g2, wlogs


@njit(cache=True, nogil=True)
def _combine(u1, u2, d1, d2, lu, w1, w2, g1, g2, lw, lam, left, right):
    # a = W(phi, psi), a' from the lam-derivative of the Wronskian, and
    # b = <psi, phi>/|psi|^2, which equals b exactly wherever a = 0
    wr = u1 * w2 - u2 * w1
    dwr = d1 * w2 - d2 * w1 + u1 * g2 - u2 * g1
    span = right - left
    ea = np.exp(lu + lw + 1j * lam * span)
    a = wr * ea
    ap = (dwr + 1j * span * wr) * ea
    b = (np.conj(w1) * u1 + np.conj(w2) * u2) / (abs(w1) ** 2 + abs(w2) ** 2)
    b = b * np.exp(lu - lw - 1j * lam * (left + right))
    return a, b, ap


@njit(cache=True, nogil=True)
def _qc_kernel(q, dt, left, right, lams, out):
    for i in range(lams.shape[0]):
        lam = lams[i] + 0j
        r = _zs_kernel(q, dt, lam)
        a, b, ap = _combine(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8], r[9],
                            lam, left, right)
        out[i] = b / a


def _raw_scatter(q, t_first, dt, lam):
    lam = complex(lam)
    left = t_first - 0.5 * dt
    right = left + dt * len(q)
    r = _zs_kernel(q, dt, lam)
    with np.errstate(over="ignore", invalid="ignore"):
        a, b, ap = _combine(*r, lam, left, right)
    if not (np.isfinite(a) and np.isfinite(b) and np.isfinite(ap)):
        raise ScatteringOverflow(
            f"scattering overflow at lambda={lam}: growth exp({r[4]:.1f}) exceeds double range; "
            "rescale the window (centre the signal) or reduce Im(lambda)")
    return a, b, ap


def scatter(sig: Signal, lam: complex, richardson: bool = True) -> ScatteringCoefficients:
    """Scattering coefficients a, b and da/dlambda at a single spectral parameter."""
    q = np.ascontiguousarray(sig.samples, dtype=np.complex128)
    t0, dt = sig.grid.t_start, sig.grid.dt
    a, b, ap = _raw_scatter(q, t0, dt, lam)
    if richardson:
        a2, b2, ap2 = _raw_scatter(np.ascontiguousarray(q[::2]), t0, 2 * dt, lam)
        a, b, ap = (4 * a - a2) / 3, (4 * b - b2) / 3, (4 * ap - ap2) / 3
    return ScatteringCoefficients(complex(lam), complex(a), complex(b), complex(ap))


def continuous_spectrum(sig: Signal, lambdas, richardson: bool = True) -> ContinuousSpectrum:
    lams = np.ascontiguousarray(np.asarray(lambdas, dtype=float))
    q = np.ascontiguousarray(sig.samples, dtype=np.complex128)
    dt = sig.grid.dt
    left = sig.grid.t_start - 0.5 * dt

    def run(qq, h):
        out = np.empty(len(lams), dtype=np.complex128)
        _qc_kernel(qq, h, left, left + h * len(qq), lams, out)
        return out

    qc = run(q, dt)
    if richardson:
        qc = (4 * qc - run(np.ascontiguousarray(q[::2]), 2 * dt)) / 3
    return ContinuousSpectrum(lams, qc)


# discrete spectrum -----------------------------------------------------------

@dataclass(frozen=True)
class SearchRegion:
    re_min: float = -1.0
    re_max: float = 1.0
    im_min: float = 0.0
    im_max: float = 2.0

    def contains(self, lam: complex) -> bool:
        return (self.re_min <= lam.real <= self.re_max
                and self.im_min < lam.imag <= self.im_max)

    @classmethod
    def parse(cls, text: str) -> "SearchRegion":
        """Parse ``"re:[-1,1] im:(0,2]"``; bracket style is informational."""
        vals = {}
        for part in text.split():
            key, rng = part.split(":", 1)
            lo, hi = rng.strip("[]()").split(",")
            vals[key.strip()] = (float(lo), float(hi))
        re_lo, re_hi = vals.get("re", (-1.0, 1.0))
        im_lo, im_hi = vals.get("im", (0.0, 2.0))
        return cls(re_lo, re_hi, im_lo, im_hi)


def count_zeros(sig: Signal, region: SearchRegion, floor: float = 1e-3,
                richardson: bool = False, max_step: float = 0.5) -> int:
    """Zeros of a inside the region by the argument principle.

    The bottom edge is raised to ``floor`` so it stays off the real axis.
    Contour points are refined adaptively until consecutive phase increments
    are below ``max_step`` radians.
    """
    lo = max(region.im_min, floor)
    corners = [complex(region.re_min, lo), complex(region.re_max, lo),
               complex(region.re_max, region.im_max), complex(region.re_min, region.im_max)]

    def a_of(lam):
        return scatter(sig, lam, richardson=richardson).a

    total = 0.0
    for c0, c1 in zip(corners, corners[1:] + corners[:1]):
        pts = [c0 + (c1 - c0) * s for s in np.linspace(0.0, 1.0, 33)]
        vals = [a_of(p) for p in pts]
        i = 0
        while i < len(pts) - 1:
            step = np.angle(vals[i + 1] / vals[i])
            if abs(step) > max_step and abs(pts[i + 1] - pts[i]) > 1e-9:
                mid = 0.5 * (pts[i] + pts[i + 1])
                pts.insert(i + 1, mid)
                vals.insert(i + 1, a_of(mid))
                continue
            total += step
            i += 1
    return int(round(total / (2 * np.pi)))


class _Grid:
    """Raw (non-extrapolated) scattering on one sampling of the signal."""

    def __init__(self, q, t_first, dt):
        self.q = np.ascontiguousarray(q, dtype=np.complex128)
        self.t_first = t_first
        self.dt = dt

    def __call__(self, lam):
        return _raw_scatter(self.q, self.t_first, self.dt, lam)


class _Deflated:
    """a(lambda) divided by the Blaschke factors (lambda - r)/(lambda - conj r) of known roots.

    The quotient still tends to 1 at infinity, so the deflation adds no
    spurious attractor there, and the known roots repel the Newton search.
    """

    def __init__(self, fn, roots):
        self.fn = fn
        self.roots = list(roots)

    def __call__(self, lam):
        a, b, ap = self.fn(lam)
        if not self.roots:
            return a, b, ap
        blaschke, log_deriv = 1.0 + 0j, 0j
        for r in self.roots:
            blaschke *= (lam - r) / (lam - r.conjugate())
            log_deriv += 1.0 / (lam - r) - 1.0 / (lam - r.conjugate())
        q = a / blaschke
        return q, b, ap / blaschke - q * log_deriv


def _newton(fn, lam0, tol=NEWTON_TOL, max_iter=60):
    """Damped Newton on a(lambda). Returns (lam, a, b, a') or None plus the last iterate."""
    lam = complex(lam0)
    for _ in range(max_iter):
        try:
            a, b, ap = fn(lam)
        except ScatteringOverflow:
            return None, lam
        if abs(a) < tol:
            return (lam, a, b, ap), lam
        if ap == 0:
            return None, lam
        step = a / ap
        mag = abs(step)
        if mag > 0.25:
            step *= 0.25 / mag
        new = lam - step
        if new.imag <= 0:
            new = complex(new.real, 0.5 * lam.imag)
        lam = new
        if not np.isfinite(lam):
            return None, lam
    return None, lam


def find_discrete_spectrum(sig: Signal, region: SearchRegion | None = None,
                           count: int | None = None, hints=None, seeds: int = 8,
                           richardson: bool = True, use_contour: bool = True) -> DiscreteSpectrum:
    """Zeros of a(lambda) in the upper half plane with their spectral amplitudes.

    Newton iteration is started from each hint, then from a grid of seeds over
    the region until the argument-principle zero count is reached; the seeded
    search deflates the roots already found. Roots and
    ``b/a'`` are computed where the raw scheme's ``a`` vanishes (so ``b`` is
    uncontaminated by the growing mode); with ``richardson`` the same is
    repeated on the every-other-sample grid and both results are extrapolated.
    """
    region = region or SearchRegion()
    target = count_zeros(sig, region) if use_contour else None
    fine = _Grid(sig.samples, sig.grid.t_start, sig.grid.dt)
    roots: list[tuple] = []

    def add(res):
        lam = res[0]
        if not region.contains(lam):
            return
        if any(abs(r[0] - lam) < DEDUP_RADIUS for r in roots):
            return
        roots.append(res)

    for h in hints or ():
        res, last = _newton(fine, h)
        if res is None:
            raise RootRefinementFailed(f"root refinement failed from hint {complex(h)}; "
                                       f"last iterate {last}", last)
        add(res)

    if target is None or len(roots) < target:
        res_grid = np.linspace(region.re_min, region.re_max, seeds + 2)[1:-1]
        im_grid = np.linspace(max(region.im_min, 0.0), region.im_max, seeds + 2)[1:-1]
        for im in im_grid[::-1]:
            for re in res_grid:
                if target is not None and len(roots) >= target:
                    break
                res, _ = _newton(_Deflated(fine, [r[0] for r in roots]), complex(re, im))
                if res is not None:
                    # polish on the undeflated function
                    res, _ = _newton(fine, res[0])
                if res is not None:
                    add(res)

    zetas = [r[0] for r in roots]
    amps = [r[2] / r[3] for r in roots]
    if richardson and roots:
        coarse = _Grid(sig.samples[::2], sig.grid.t_start, 2 * sig.grid.dt)
        for i, lam in enumerate(zetas):
            res, last = _newton(coarse, lam)
            if res is None:
                raise RootRefinementFailed(f"root refinement failed on the coarse grid near {lam}; "
                                           f"last iterate {last}", last)
            zetas[i] = (4 * lam - res[0]) / 3
            amps[i] = (4 * amps[i] - res[2] / res[3]) / 3

    spec = DiscreteSpectrum(tuple(zetas), tuple(amps))
    expected = count if count is not None else target
    if expected is not None and len(spec) != expected:
        raise SpectrumCountMismatch(
            f"spectrum count mismatch: expected {expected}, found {len(spec)}: "
            f"{[complex(z) for z in spec.zetas]}", spec)
    return spec


def evolve_spectrum(spec: DiscreteSpectrum, z: float) -> DiscreteSpectrum:
    if z < 0:
        raise ValueError("z must be nonnegative")
    return DiscreteSpectrum(spec.zetas, tuple(q * np.exp(-4j * zeta**2 * z)
                                              for zeta, q in spec.entries))
