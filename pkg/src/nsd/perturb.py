"""First-order soliton perturbation SDEs and the split-and-concatenate channel models.

The four soliton parameters are driven by projections of the white noise
``W = G exp(-j phi)`` onto the soliton kernels. Re W and Im W are independent
with intensity 1/2 each, so over a step ``dz`` the projections are Gaussian
with variances

==========  ======================  ======================
parameter   kernel                  variance / (eps^2 dz)
==========  ======================  ======================
alpha       beta sech tanh (Im W)   beta / 6
beta        beta sech (Re W)        beta / 2
T0          u sech (Re W)           pi^2 / (96 beta^3)
theta       sech (Im W)             1 / (2 beta)
==========  ======================  ======================

with ``u = t - T0`` and every sech/tanh evaluated at ``2 beta u``. Kernels of
opposite parity are orthogonal, so the four draws are independent; theta
also picks up ``2 alpha`` times the T0 draw.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ssfm import PropagationConfig, make_rng, wrap_phase
from .waveform import SolitonSpec

# variance of each kernel projection per unit eps^2 dz, as functions of beta
KERNEL_VARIANCE = {
    "alpha": lambda beta: beta / 6.0,
    "beta": lambda beta: beta / 2.0,
    "T0": lambda beta: math.pi**2 / (96.0 * beta**3),
    "theta": lambda beta: 1.0 / (2.0 * beta),
}


def kernel_functions(beta: float):
    """The kernels themselves (functions of u = t - T0), for quadrature checks."""
    def sech(x):
        e = np.exp(-np.abs(x))
        return 2 * e / (1 + e * e)
    return {
        "alpha": lambda u: beta * sech(2 * beta * u) * np.tanh(2 * beta * u),
        "beta": lambda u: beta * sech(2 * beta * u),
        "T0": lambda u: u * sech(2 * beta * u),
        "theta": lambda u: sech(2 * beta * u),
    }


class SolitonCollapse(FloatingPointError):
    """beta reached zero or below."""


@dataclass(frozen=True)
class SolitonState:
    """Soliton parameters; fields may also be arrays holding one value per trial."""

    alpha: float
    beta: float
    T0: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.T0, self.theta)
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise ValueError(f"non-finite soliton state {vals}")
        if not np.all(np.asarray(self.beta) > 0):
            raise ValueError(f"degenerate soliton: beta={self.beta} must be positive")

    def reference(self, length: float):
        """ln|Q| and arg Q of the noiselessly evolved input at ``length``."""
        a, b = np.asarray(self.alpha), np.asarray(self.beta)
        ln_mag = 2 * b * (np.asarray(self.T0) + 4 * a * length) + np.log(2 * b)
        phase = -np.asarray(self.theta) - 2 * a * np.asarray(self.T0) - np.pi / 2 - 4 * (a * a - b * b) * length
        return ln_mag, wrap_phase(phase)

    @classmethod
    def from_spec(cls, spec: SolitonSpec, z: float = 0.0) -> "SolitonState":
        qz = spec.q_d_at(z)
        t0 = spec.center(z)
        theta = -2 * spec.alpha * t0 - float(np.angle(qz)) - math.pi / 2
        return cls(spec.alpha, spec.beta, t0, float(wrap_phase(theta)))

    def to_spec(self) -> SolitonSpec:
        b = self.beta
        mag = 2 * b * math.exp(2 * b * self.T0)
        phase = -self.theta - 2 * self.alpha * self.T0 - math.pi / 2
        return SolitonSpec(complex(self.alpha, b), mag * np.exp(1j * phase))


@dataclass
class PerturbationPath:
    """Sampled noise paths for a batch of trials (rows) on ``z_grid`` (columns).

    ``integrals`` holds quantities accumulated at the full step resolution:
    trapezoidal ``I_R``, ``I_I``, ``I_RI``, ``I_R2mI2``, the left Riemann sum
    ``G_R`` of ``ups_R`` (the one the Euler step for T0 actually uses) and
    ``D`` = integral of the T0 kernel noise.
    """

    z_grid: np.ndarray
    ups_R: np.ndarray
    ups_I: np.ndarray
    eps: float
    state0: SolitonState
    T0: np.ndarray | None = None
    theta: np.ndarray | None = None
    delta_int: np.ndarray | None = None
    integrals: dict = field(default_factory=dict)

    @property
    def length(self) -> float:
        return float(self.z_grid[-1])

    @property
    def nu_I(self) -> np.ndarray:
        return self.ups_I - 0.5 * self.eps**2 * self.z_grid

    @property
    def n_trials(self) -> int:
        return self.ups_R.shape[0]

    def to_csv(self, path, trial: int = 0) -> None:
        data = np.column_stack([self.z_grid, self.ups_R[trial], self.ups_I[trial]])
        np.savetxt(path, data, delimiter=",", header="z,ups_R,ups_I", fmt="%.17g")


def simulate_soliton_sde(state0: SolitonState, cfg: PropagationConfig, trials: int = 1,
                         rng: np.random.Generator | None = None, record_stride: int | None = 1,
                         freeze_beta: bool = False, advection: bool = True) -> PerturbationPath:
    """Euler-Maruyama integration of the soliton perturbation SDEs for ``trials`` paths.

    Coefficients are evaluated at the current state (Ito). ``freeze_beta``
    replaces beta by beta(0) inside every kernel and ``advection=False`` drops
    the eps^2/2 drift of beta; together they give the usual additive-noise
    approximations. ``record_stride=None`` records only the end points.
    """
    eps = cfg.eps if cfg.noise_on else 0.0
    n_steps = cfg.n_steps
    dz = cfg.step
    if eps * math.sqrt(dz) > 0.1 * np.min(state0.beta):
        warnings.warn(f"eps*sqrt(dz)={eps * math.sqrt(dz):.3g} is not small against beta0")
    if rng is None:
        rng = make_rng(cfg.seed)
    shape = (trials,)
    a = np.broadcast_to(np.asarray(state0.alpha, dtype=float), shape).copy()
    b = np.broadcast_to(np.asarray(state0.beta, dtype=float), shape).copy()
    t0 = np.broadcast_to(np.asarray(state0.T0, dtype=float), shape).copy()
    th = np.broadcast_to(np.asarray(state0.theta, dtype=float), shape).copy()
    d_int = np.zeros(shape)
    a0, b0 = a.copy(), b.copy()
    acc = {k: np.zeros(shape) for k in ("I_R", "I_I", "I_RI", "I_R2mI2", "G_R")}

    if record_stride is None:
        rec_idx = [0, n_steps]
    else:
        rec_idx = list(range(0, n_steps + 1, record_stride))
        if rec_idx[-1] != n_steps:
            rec_idx.append(n_steps)
    rec = {k: np.empty((trials, len(rec_idx))) for k in ("R", "I", "T0", "th", "D")}
    slot = 0

    def record(col):
        rec["R"][:, col] = a - a0
        rec["I"][:, col] = b - b0
        rec["T0"][:, col] = t0
        rec["th"][:, col] = th
        rec["D"][:, col] = d_int

    record(0)
    slot = 1
    e2dz = eps * eps * dz
    drift_b = 0.5 * e2dz if advection else 0.0
    for k in range(n_steps):
        bk = b0 if freeze_beta else b
        ur, ui = a - a0, b - b0
        if eps > 0:
            xi = rng.standard_normal((4,) + shape)
            d_a = np.sqrt(e2dz * bk / 6.0) * xi[0]
            d_b = drift_b + np.sqrt(e2dz * bk / 2.0) * xi[1]
            delta = np.sqrt(e2dz * math.pi**2 / (96.0 * bk**3)) * xi[2]
            eta = np.sqrt(e2dz / (2.0 * bk)) * xi[3]
        else:
            d_a = d_b = delta = eta = 0.0
        t0 = t0 + 4.0 * a * dz + delta
        th = th - 4.0 * (a * a + b * b) * dz + eta + 2.0 * a * delta
        acc["G_R"] += ur * dz
        a = a + d_a
        b = b + d_b
        d_int = d_int + delta
        nr, ni = a - a0, b - b0
        acc["I_R"] += 0.5 * dz * (ur + nr)
        acc["I_I"] += 0.5 * dz * (ui + ni)
        acc["I_RI"] += 0.5 * dz * (ur * ui + nr * ni)
        acc["I_R2mI2"] += 0.5 * dz * (ur * ur - ui * ui + nr * nr - ni * ni)
        if np.any(b <= 0):
            raise SolitonCollapse(f"soliton collapse in SDE at z={(k + 1) * dz:.6g}")
        if slot < len(rec_idx) and rec_idx[slot] == k + 1:
            record(slot)
            slot += 1

    z_grid = np.array(rec_idx, dtype=float) * dz
    return PerturbationPath(z_grid, rec["R"], rec["I"], eps, state0, rec["T0"], rec["th"],
                            rec["D"], acc)


# channel models ---------------------------------------------------------------

@dataclass
class AmplitudeChannelSample:
    ln_mag_in: np.ndarray
    ln_mag_out: np.ndarray
    phase_in: np.ndarray
    phase_out: np.ndarray
    I_R: np.ndarray
    I_I: np.ndarray
    I_RI: np.ndarray
    I_R2mI2: np.ndarray

    @property
    def noise(self) -> np.ndarray:
        """N(L) = ln|Q(zeta(L), L)| - ln|Q(zeta(0), L)|."""
        return self.ln_mag_out - self.ln_mag_in

    def to_records(self):
        keys = ("ln_mag_in", "ln_mag_out", "phase_in", "phase_out", "I_R", "I_I", "I_RI", "I_R2mI2")
        cols = [np.atleast_1d(getattr(self, k)) for k in keys]
        return [dict(zip(keys, map(float, row))) for row in zip(*cols)]


def _channel(a0, b0, ln_in, ph_in, I_R, I_I, I_RI, I_R2mI2) -> AmplitudeChannelSample:
    ln_out = ln_in + 8 * a0 * I_I + 8 * b0 * I_R + 8 * I_RI
    ph_out = wrap_phase(ph_in - 8 * a0 * I_R + 8 * b0 * I_I - 4 * I_R2mI2)
    shape = np.shape(ln_out)
    return AmplitudeChannelSample(np.broadcast_to(ln_in, shape).copy(), ln_out,
                                  np.broadcast_to(wrap_phase(ph_in), shape).copy(),
                                  ph_out, I_R, I_I, I_RI, I_R2mI2)


def magnitude_channel(path: PerturbationPath, spec0: SolitonSpec | None = None) -> AmplitudeChannelSample:
    """Magnitude and phase channel outputs from the path integrals.

    Uses the full-resolution trapezoidal integrals when the path carries them,
    otherwise trapezoidal quadrature over the recorded grid. Without ``spec0``
    the input is taken from the path's initial state (which may vary per trial).
    """
    if spec0 is not None:
        q_ref = spec0.q_d_at(path.length)
        ref = (spec0.alpha, spec0.beta, math.log(abs(q_ref)), float(np.angle(q_ref)))
    else:
        s0 = path.state0
        ref = (np.asarray(s0.alpha), np.asarray(s0.beta)) + tuple(s0.reference(path.length))
    if path.integrals:
        it = path.integrals
        return _channel(*ref, it["I_R"], it["I_I"], it["I_RI"], it["I_R2mI2"])
    z, r, i = path.z_grid, path.ups_R, path.ups_I
    return _channel(*ref, np.trapezoid(r, z, axis=-1), np.trapezoid(i, z, axis=-1),
                    np.trapezoid(r * i, z, axis=-1), np.trapezoid(r * r - i * i, z, axis=-1))


def concatenate_model(path: PerturbationPath, spec0: SolitonSpec, m: int) -> AmplitudeChannelSample:
    """Discrete product over an m-segment partition, with left end points as z_k."""
    if m < 1:
        raise ValueError("m must be at least 1")
    length = path.length
    edges = np.linspace(0.0, length, m + 1)
    zk = edges[:-1]
    width = np.diff(edges)

    def at(track):
        return np.stack([np.interp(zk, path.z_grid, row) for row in np.atleast_2d(track)])

    r, i = at(path.ups_R), at(path.ups_I)
    ups = r + 1j * i
    zeta0 = spec0.zeta
    log_q = np.log(spec0.q_d) - 4j * np.sum((zeta0 + ups) ** 2 * width, axis=-1)
    q_ref = spec0.q_d_at(length)
    I_R = np.sum(r * width, axis=-1)
    I_I = np.sum(i * width, axis=-1)
    I_RI = np.sum(r * i * width, axis=-1)
    I_R2mI2 = np.sum((r * r - i * i) * width, axis=-1)
    shape = I_R.shape
    return AmplitudeChannelSample(np.full(shape, math.log(abs(q_ref))), log_q.real,
                                  np.full(shape, wrap_phase(np.angle(q_ref))), wrap_phase(log_q.imag),
                                  I_R, I_I, I_RI, I_R2mI2)


@dataclass
class PerturbationComponents:
    N11: np.ndarray
    N12: np.ndarray
    N13: np.ndarray
    N2: np.ndarray
    N31: np.ndarray
    N32: np.ndarray
    N4: np.ndarray

    @property
    def N1(self):
        return self.N11 + self.N12 + self.N13

    @property
    def N3(self):
        return self.N31 + self.N32

    @property
    def total(self):
        return self.N1 + self.N2 + self.N3 + self.N4

    def as_dict(self):
        return {"N1": self.N1, "N2": self.N2, "N3": self.N3, "N4": self.N4, "N11": self.N11,
                "N12": self.N12, "N13": self.N13, "N31": self.N31, "N32": self.N32}


def perturbation_model(path: PerturbationPath, spec0: SolitonSpec | None = None) -> PerturbationComponents:
    """Decomposition of the magnitude noise suggested by direct perturbation theory.

    The sum of the components equals ``2 beta(L) T0(L) + ln 2 beta(L)`` minus
    the same expression for the noiselessly evolved input, for the realised
    path (``G_R`` is the left Riemann sum used by the T0 update).
    """
    if path.delta_int is None or path.T0 is None or "G_R" not in path.integrals:
        raise ValueError("path lacks the T0 / Delta tracks needed by the perturbation model")
    s0 = path.state0
    if spec0 is not None and (np.any(np.abs(spec0.alpha - np.asarray(s0.alpha)) > 1e-12)
                              or np.any(np.abs(spec0.beta - np.asarray(s0.beta)) > 1e-12)):
        raise ValueError("spec0 does not match the path's initial state")
    a0, b0, t00 = (np.asarray(v, dtype=float) for v in (s0.alpha, s0.beta, s0.T0))
    L = path.length
    ui = path.ups_I[:, -1]
    d = path.delta_int[:, -1]
    g = path.integrals["G_R"]
    return PerturbationComponents(
        N11=2 * b0 * d,
        N12=2 * ui * t00,
        N13=np.log((b0 + ui) / b0),
        N2=2 * ui * d,
        N31=8 * L * a0 * ui,
        N32=8 * b0 * g,
        N4=8 * ui * g,
    )
