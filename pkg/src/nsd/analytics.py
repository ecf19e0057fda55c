"""Closed-form statistics of the eigenvalue and spectral-amplitude noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .units import FWHM_SECH, FiberParams, normalize, power_to_beta


@dataclass(frozen=True)
class Dist:
    """Point mass (``lo == hi``) or uniform distribution on [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi < self.lo:
            raise ValueError(f"invalid support [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "Dist":
        return cls(float(x), float(x))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "Dist":
        return cls(float(lo), float(hi))

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def moment(self, k: int) -> float:
        """E[X^k] for integer k (negative k requires support away from 0)."""
        a, b = self.lo, self.hi
        if k < 0 and a <= 0 <= b:
            raise ValueError("negative moment of a distribution whose support contains 0")
        if self.is_point:
            return a**k
        if k == -1:
            return math.log(b / a) / (b - a)
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.is_point:
            return np.full(size, self.lo)
        return rng.uniform(self.lo, self.hi, size)

    @classmethod
    def parse(cls, text: str) -> "Dist":
        """``"0.028"`` for a point mass or ``"uniform(a, b)"``/``"[a, b]"``."""
        s = text.strip().lower()
        if s.startswith("uniform"):
            s = s[len("uniform"):]
        s = s.strip("()[] ")
        if "," in s:
            lo, hi = (float(v) for v in s.split(","))
            return cls.uniform(lo, hi)
        return cls.point(float(s))


@dataclass(frozen=True)
class InputEnsemble:
    """Independent alpha(0), beta(0), T0(0)."""

    alpha0: Dist = Dist(0.0, 0.0)
    beta0: Dist = Dist(0.5, 0.5)
    T00: Dist = Dist(0.0, 0.0)
    independent: bool = True

    def __post_init__(self):
        if not self.independent:
            raise ValueError("only independent ensembles are supported")
        if not self.beta0.lo > 0:
            raise ValueError("beta0 support must be strictly positive")

    @classmethod
    def point(cls, alpha: float = 0.0, beta: float = 0.5, T0: float = 0.0) -> "InputEnsemble":
        return cls(Dist.point(alpha), Dist.point(beta), Dist.point(T0))

    def Ea(self, k=1):
        return self.alpha0.moment(k)

    def Eb(self, k=1):
        return self.beta0.moment(k)

    def Et(self, k=1):
        return self.T00.moment(k)

    def sample(self, rng: np.random.Generator, size):
        return (self.alpha0.sample(rng, size), self.beta0.sample(rng, size), self.T00.sample(rng, size))

    @classmethod
    def from_mapping(cls, cfg: dict) -> "InputEnsemble":
        def get(key, default):
            v = cfg.get(key, default)
            return Dist.parse(v) if isinstance(v, str) else Dist.point(v)
        return cls(get("alpha0", 0.0), get("beta0", 0.5), get("T00", 0.0))


@dataclass
class StatReport:
    name: str
    analytic: float
    estimate: float | None = None
    stderr: float | None = None
    z: float | None = None
    passed: bool = True
    rule: str = "closed-form"

    @classmethod
    def compare(cls, name, analytic, estimate, stderr, k: float = 3.0) -> "StatReport":
        z = (estimate - analytic) / stderr if stderr > 0 else (0.0 if estimate == analytic else math.inf)
        return cls(name, float(analytic), float(estimate), float(stderr), float(z),
                   bool(abs(z) <= k), f"|z|<={k:g}")

    @classmethod
    def relative(cls, name, analytic, estimate, rtol: float, stderr: float | None = None) -> "StatReport":
        rel = abs(estimate - analytic) / abs(analytic) if analytic != 0 else abs(estimate)
        z = None if not stderr else float((estimate - analytic) / stderr)
        return cls(name, float(analytic), float(estimate), None if stderr is None else float(stderr),
                   z, bool(rel <= rtol), f"rel<={rtol:g}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


# eigenvalue moments -----------------------------------------------------------

@dataclass(frozen=True)
class EigenMoments:
    mean_R: float
    mean_I: float
    m2_R: float
    m2_I: float
    var_R: float
    var_I: float


def eigen_moments(beta0: float, eps2: float, L: float) -> EigenMoments:
    if not beta0 > 0 or eps2 < 0 or L < 0:
        raise ValueError("need beta0 > 0, eps2 >= 0, L >= 0")
    mean_I = 0.5 * eps2 * L
    m2_R = eps2 * L * beta0 / 6 + eps2**2 * L**2 / 24
    m2_I = 0.5 * eps2 * L * beta0 + 3.0 / 8.0 * eps2**2 * L**2
    return EigenMoments(0.0, mean_I, m2_R, m2_I, m2_R, m2_I - mean_I**2)


def lemma1_fourth(s: float, eps2: float, Eb: float, Eb2: float) -> float:
    """E[(ups_R nu_I)(s) (ups_R nu_I)(t)] for s <= t."""
    return eps2**2 * s**2 * Eb2 / 12 + eps2**3 * s**3 * Eb / 18 + eps2**4 * s**4 / 144


def lemma2_R_RI(L: float, eps2: float, beta0: float) -> float:
    """E[Gamma_R Gamma_RI] with Gamma_R = int ups_R, Gamma_RI = int ups_R ups_I."""
    return 5.0 / 288 * eps2**2 * L**4 * beta0 + 7.0 / 2880 * eps2**3 * L**5


def theorem4_stats(ens: InputEnsemble, eps2: float, L: float):
    """Mean and variance of N(L) for the magnitude channel."""
    e, L1 = eps2, L
    mean = 2 * e * L1**2 * ens.Ea()
    var = (32 / 3 * e * L1**3 * ens.Ea(2) * ens.Eb()
           + 32 / 9 * e * L1**3 * ens.Eb(3)
           + 16 / 3 * e**2 * L1**4 * ens.Ea(2)
           + 32 / 9 * e**2 * L1**4 * ens.Eb(2)
           + 46 / 45 * e**3 * L1**5 * ens.Eb()
           + 23 / 270 * e**4 * L1**6
           - 4 * e**2 * L1**4 * ens.Ea() ** 2)
    return mean, var


def theorem4_leading(ens: InputEnsemble, eps2: float, L: float) -> float:
    """The O(eps^2 L^3) part of the amplitude-magnitude noise variance."""
    return 32 / 3 * eps2 * L**3 * ens.Ea(2) * ens.Eb() + 32 / 9 * eps2 * L**3 * ens.Eb(3)


def gordon_haus_order(eps2: float, L_list, beta0: float, leading_only: bool = False) -> float:
    """Log-log slope of the amplitude-magnitude noise variance against L (alpha = 0 point input)."""
    Ls = np.asarray(L_list, dtype=float)
    if Ls.size < 2 or not np.all(Ls > 0) or Ls.max() / Ls.min() < 10 * (1 - 1e-12):
        raise ValueError("L_list must hold positive values spanning at least one decade")
    ens = InputEnsemble.point(0.0, beta0, 0.0)
    if leading_only:
        v = [theorem4_leading(ens, eps2, L) for L in Ls]
    else:
        v = [theorem4_stats(ens, eps2, L)[1] for L in Ls]
    slope, _ = np.polyfit(np.log(Ls), np.log(v), 1)
    return float(slope)


def section6_stats(ens: InputEnsemble, eps2: float, L: float) -> dict:
    """Statistics of the perturbation-theory decomposition N1..N4."""
    e = eps2
    var1 = (0.912 * e * L * ens.Eb(-1) + 2 * e * L * ens.Eb() * ens.Et(2)
            + 2 * e * L * ens.Et())
    var2 = 0.206 * e**2 * L**2 * ens.Eb(-2)
    var3 = 32 * e * L**3 * ens.Ea(2) * ens.Eb() + 32 / 9 * e * L**3 * ens.Eb(3)
    var4 = 16 / 9 * e**2 * L**4 * ens.Eb(2) + 68 / 45 * e**3 * L**5 * ens.Eb() + 16 / 135 * e**4 * L**6
    cov13 = 8 * e * L**2 * ens.Ea() * ens.Eb() * ens.Et() + 4 * e * L**2 * ens.Ea()
    return {
        "VarN1": var1, "VarN2": var2, "VarN3": var3, "VarN4": var4,
        "VarN0": var1 + var3 + 2 * cov13,
        "Cov13": cov13, "Cov12": 0.0, "Cov14": 0.0, "Cov23": 0.0, "Cov24": 0.0, "Cov34": 0.0,
    }


def table3_ensemble(b: float, t_half: float = FWHM_SECH) -> InputEnsemble:
    half = t_half / (4 * b)
    return InputEnsemble(Dist.point(0.0), Dist.uniform(0.9 * b, 1.1 * b), Dist.uniform(-half, half))


@dataclass(frozen=True)
class Example1:
    power_W: float
    b: float
    eps2: float
    L: float
    var_N1: float
    var_N3: float
    ratio: float


def example1(power_W: float, separation_fwhm: float = 7.0, L_km: float = 7000.0,
             params: FiberParams | None = None, t_half: float = FWHM_SECH) -> Example1:
    if not power_W > 0:
        raise ValueError("power must be positive")
    units = normalize(params or FiberParams())
    b = power_to_beta(power_W, units, separation_fwhm)
    ens = table3_ensemble(b, t_half)
    L = L_km / units.L_n
    st = section6_stats(ens, units.eps2, L)
    return Example1(power_W, b, units.eps2, L, st["VarN1"], st["VarN3"], st["VarN3"] / st["VarN1"])


def example1_ratio(power_W: float, separation_fwhm: float = 7.0, L_km: float = 7000.0,
                   params: FiberParams | None = None) -> float:
    return example1(power_W, separation_fwhm, L_km, params).ratio


def soliton_center(q_d_mag: float, beta: float) -> float:
    if not q_d_mag > 0 or not beta > 0:
        raise ValueError("soliton_center needs positive |Q| and beta")
    return math.log(q_d_mag / (2 * beta)) / (2 * beta)


# registry of named closed forms, used by the Monte Carlo harness
def point_checks(beta0: float, eps2: float, L: float, alpha0: float = 0.0) -> dict:
    m = eigen_moments(beta0, eps2, L)
    ens = InputEnsemble.point(alpha0, beta0, 0.0)
    mean_N, var_N = theorem4_stats(ens, eps2, L)
    return {
        "mean_ups_R": m.mean_R,
        "mean_ups_I": m.mean_I,
        "m2_ups_R": m.m2_R,
        "m2_ups_I": m.m2_I,
        "var_ups_R": m.var_R,
        "var_ups_I": m.var_I,
        "mean_N": mean_N,
        "var_N": var_N,
    }
