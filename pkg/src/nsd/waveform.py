"""Time grids, signals and exact soliton / N-soliton synthesis."""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DECAY_THRESHOLD = 1e-8


class GridTooNarrow(ValueError):
    """The signal has not decayed at the edges of the time window."""


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    dt: float
    n: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n < 8:
            raise ValueError(f"need at least 8 samples, got {self.n}")

    @classmethod
    def centered(cls, width: float, n: int) -> "TimeGrid":
        dt = width / n
        return cls(t_start=-0.5 * width + 0.5 * dt, dt=dt, n=n)

    @property
    def t(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * (self.n - 1)

    @property
    def width(self) -> float:
        return self.dt * self.n

    @property
    def omega(self) -> np.ndarray:
        """Angular frequencies in numpy FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.dt)


@dataclass(frozen=True)
class Signal:
    grid: TimeGrid
    samples: np.ndarray
    z: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.shape[-1] != self.grid.n:
            raise ValueError(f"expected {self.grid.n} samples, got {samples.shape[-1]}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    def edge_magnitude(self) -> float:
        return float(max(abs(self.samples[..., 0]).max(), abs(self.samples[..., -1]).max()))

    def check_decay(self, threshold: float = DECAY_THRESHOLD) -> None:
        edge = self.edge_magnitude()
        if not edge < threshold:
            raise GridTooNarrow(f"grid too narrow: edge magnitude {edge:.3e} >= {threshold:.1e}")

    def with_samples(self, samples, z=None) -> "Signal":
        return Signal(self.grid, samples, self.z if z is None else z)


@dataclass(frozen=True)
class SolitonSpec:
    """Eigenvalue and discrete spectral amplitude, the latter at z = 0."""

    zeta: complex
    q_d: complex

    def __post_init__(self):
        object.__setattr__(self, "zeta", complex(self.zeta))
        object.__setattr__(self, "q_d", complex(self.q_d))
        if not self.zeta.imag > 0:
            raise ValueError(f"eigenvalue must lie in the upper half plane, got {self.zeta}")
        if not abs(self.q_d) > 0:
            raise ValueError("spectral amplitude must be nonzero")

    @property
    def alpha(self) -> float:
        return self.zeta.real

    @property
    def beta(self) -> float:
        return self.zeta.imag

    def q_d_at(self, z: float) -> complex:
        return self.q_d * np.exp(-4j * self.zeta**2 * z)

    def center(self, z: float = 0.0) -> float:
        return math.log(abs(self.q_d_at(z)) / (2 * self.beta)) / (2 * self.beta)

    @classmethod
    def from_center(cls, zeta: complex, t0: float, phase: float = 0.0) -> "SolitonSpec":
        """Soliton centred at ``t0`` with ``arg Q = phase`` at z = 0."""
        beta = complex(zeta).imag
        return cls(zeta, 2 * beta * math.exp(2 * beta * t0) * np.exp(1j * phase))


def make_soliton(spec: SolitonSpec, z: float, grid: TimeGrid,
                 threshold: float = DECAY_THRESHOLD) -> Signal:
    alpha, beta = spec.alpha, spec.beta
    qz = spec.q_d_at(z)
    t0 = math.log(abs(qz) / (2 * beta)) / (2 * beta)
    t = grid.t
    env = 2 * beta / np.cosh(2 * beta * (t - t0))
    q = env * np.exp(-2j * alpha * t - 1j * (np.angle(qz) + np.pi / 2))
    sig = Signal(grid, q, z)
    sig.check_decay(threshold)
    return sig


def _seed_log_components(zeta: complex, kappa: complex, t: np.ndarray):
    # zero-potential solution (e^{-j zeta t}, kappa e^{j zeta t}) in log form
    l1 = -1j * zeta * t
    l2 = np.log(kappa) + 1j * zeta * t
    m = np.maximum(l1.real, l2.real)
    return np.exp(l1 - m), np.exp(l2 - m)


def darboux_constants(zetas, q_ds) -> np.ndarray:
    """Seed constants for the Darboux iteration producing spectral amplitudes ``q_ds``.

    For a reflectionless potential ``a(l) = prod (l - z_k)/(l - conj(z_k))``, so
    ``b_k = Q_k a'(z_k)``; the zero-potential seed vector at ``z_k`` carries
    ``kappa_k = -b_k``.
    """
    zetas = np.asarray(zetas, dtype=complex)
    q_ds = np.asarray(q_ds, dtype=complex)
    out = np.empty_like(q_ds)
    for k, zk in enumerate(zetas):
        ap = 1.0 / (zk - zk.conjugate())
        for l, zl in enumerate(zetas):
            if l != k:
                ap *= (zk - zl) / (zk - zl.conjugate())
        out[k] = -q_ds[k] * ap
    return out


def nsoliton_samples(zetas, q_ds, t: np.ndarray) -> np.ndarray:
    """Reflectionless potential with the given discrete data, by Darboux iteration.

    Eigenvector components are renormalised pointwise after every dressing
    step; only their ratio enters the update, so wide windows and widely
    separated pulses do not overflow.
    """
    zetas = np.asarray(zetas, dtype=complex)
    kappas = darboux_constants(zetas, q_ds)
    order = np.argsort(zetas.imag, kind="stable")
    zetas, kappas = zetas[order], kappas[order]
    vecs = [_seed_log_components(zk, kk, t) for zk, kk in zip(zetas, kappas)]
    q = np.zeros_like(t, dtype=complex)
    for k, zk in enumerate(zetas):
        p1, p2 = vecs[k]
        norm = np.abs(p1) ** 2 + np.abs(p2) ** 2
        q = q - 2j * (zk - zk.conjugate()) * p1 * np.conj(p2) / norm
        # S = H diag(zk, zk*) H^-1 with H = [[p1, p2*], [p2, -p1*]]
        s11 = (zk * np.abs(p1) ** 2 + zk.conjugate() * np.abs(p2) ** 2) / norm
        s22 = (zk * np.abs(p2) ** 2 + zk.conjugate() * np.abs(p1) ** 2) / norm
        s12 = (zk - zk.conjugate()) * p1 * np.conj(p2) / norm
        s21 = (zk - zk.conjugate()) * p2 * np.conj(p1) / norm
        for m in range(k + 1, len(zetas)):
            u1, u2 = vecs[m]
            zm = zetas[m]
            w1 = (zm - s11) * u1 - s12 * u2
            w2 = -s21 * u1 + (zm - s22) * u2
            scale = np.maximum(np.abs(w1), np.abs(w2))
            vecs[m] = (w1 / scale, w2 / scale)
    return q


def make_nsoliton(specs, z: float, grid: TimeGrid,
                  threshold: float = DECAY_THRESHOLD, min_separation: float = 1e-3) -> Signal:
    """N-soliton with the given eigenvalues and spectral amplitudes (given at z = 0)."""
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one soliton")
    zetas = np.array([s.zeta for s in specs])
    for i in range(len(zetas)):
        for j in range(i + 1, len(zetas)):
            gap = abs(zetas[i] - zetas[j])
            if gap < 1e-12:
                raise ValueError(f"duplicate eigenvalue {zetas[i]}")
            if gap < min_separation:
                warnings.warn(f"eigenvalues {zetas[i]} and {zetas[j]} are only {gap:.2e} apart")
    q_ds = np.array([s.q_d_at(z) for s in specs])
    sig = Signal(grid, nsoliton_samples(zetas, q_ds, grid.t), z)
    sig.check_decay(threshold)
    return sig


def default_grid(specs, z: float = 0.0, n_min: int = 1024, n_max: int = 1 << 16) -> TimeGrid:
    """Window wide enough for every pulse and fine enough for the narrowest one."""
    betas = [s.beta for s in specs]
    centers = [s.center(z) for s in specs]
    mid = 0.5 * (max(centers) + min(centers))
    spread = max(centers) - min(centers)
    # interaction scales the tails of pulse k by up to the squared factor
    # prod_l |(zeta_k - conj zeta_l) / (zeta_k - zeta_l)|^2, i.e. it moves them
    # outward by sum_l ln|...| / beta_k
    shift = [sum(abs(math.log(abs((a.zeta - b.zeta.conjugate()) / (a.zeta - b.zeta))))
                 for b in specs if b is not a) / a.beta for a in specs]
    # the tail 4 beta exp(-2 beta u) is a decade below the decay threshold at the edge
    half = max(math.log(40.0 * b / DECAY_THRESHOLD) / (2 * b) + d for b, d in zip(betas, shift))
    width = max(2 * half, 8.0 * spread, spread + 2 * half)
    n = n_min
    while width / n > 0.05 / max(betas) and n < n_max:
        n *= 2
    dt = width / n
    return TimeGrid(t_start=mid - 0.5 * width + 0.5 * dt, dt=dt, n=n)


def energy(sig: Signal) -> float:
    return float(np.trapezoid(np.abs(sig.samples) ** 2, dx=sig.grid.dt))


# serialisation ---------------------------------------------------------------

def save_csv(sig: Signal, path: str | Path) -> None:
    data = np.column_stack([sig.t, sig.samples.real, sig.samples.imag])
    np.savetxt(path, data, delimiter=",", header=f"t,re_q,im_q  z={sig.z!r}", fmt="%.17g")


def load_csv(path: str | Path) -> Signal:
    z = 0.0
    with open(path) as fh:
        first = fh.readline()
    if "z=" in first:
        z = float(first.split("z=", 1)[1])
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    t = data[:, 0]
    dt = float(t[1] - t[0])
    return Signal(TimeGrid(float(t[0]), dt, len(t)), data[:, 1] + 1j * data[:, 2], z)


_HEADER = struct.Struct("<Qd")


def save_binary(sig: Signal, path: str | Path) -> None:
    """16-byte header (u64 n, f64 dt) then interleaved little-endian f64 re/im.

    The header does not carry ``t_start``; loaders centre the window on t = 0.
    """
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(sig.grid.n, sig.grid.dt))
        fh.write(np.ascontiguousarray(sig.samples, dtype="<c16").tobytes())


def load_binary(path: str | Path, z: float = 0.0) -> Signal:
    raw = Path(path).read_bytes()
    n, dt = _HEADER.unpack_from(raw)
    samples = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size, count=n)
    return Signal(TimeGrid.centered(n * dt, n), samples.copy(), z)
