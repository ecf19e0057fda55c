"""Physical fibre parameters and the map to normalised NLSE units."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

# FWHM of |sech(t)|^2 in units of t; 2*arcsech(1/sqrt(2)) = 1.76275...
FWHM_SECH = 1.763


class ParameterError(ValueError):
    """Raised for non-finite or sign-violating physical parameters."""


@dataclass(frozen=True)
class FiberParams:
    alpha_loss: float = 0.046  # km^-1 (0.2 dB/km)
    planck_h: float = 6.626e-34  # J s
    nu_s: float = 193.55e12  # Hz
    K_T: float = 1.13
    gamma_nl: float = 1.27  # W^-1 km^-1
    beta2: float = -2e-23  # s^2 km^-1
    L_n: float = 1.0  # km

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f"{f.name} must be a finite number, got {value!r}")
        for name in ("alpha_loss", "planck_h", "nu_s", "K_T", "gamma_nl", "L_n"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.beta2 >= 0:
            raise ParameterError(f"beta2 must be negative (anomalous dispersion), got {self.beta2!r}")

    def with_(self, **changes) -> "FiberParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class NormalizedUnits:
    P_n: float  # W
    T_n: float  # s
    L_n: float  # km
    eps2: float
    kappa2: float

    def field_to_normalized(self, A):
        return A / math.sqrt(self.P_n)

    def field_to_physical(self, q):
        return q * math.sqrt(self.P_n)


def normalize(params: FiberParams) -> NormalizedUnits:
    """Unit system for the normalised stochastic NLSE.

    ``kappa2 = alpha * h * nu_s * K_T`` is the physical ASE PSD. The noise
    PSD of the normalised equation is ``gamma * kappa2 * L_n**1.5 / sqrt(2|beta2|)``,
    which reduces to ``gamma * kappa2 / sqrt(2|beta2|)`` for the usual ``L_n = 1 km``.
    """
    kappa2 = params.alpha_loss * params.planck_h * params.nu_s * params.K_T
    P_n = 2.0 / (params.gamma_nl * params.L_n)
    T_n = math.sqrt(abs(params.beta2) * params.L_n / 2.0)
    eps2 = params.gamma_nl * kappa2 * params.L_n**1.5 / math.sqrt(2.0 * abs(params.beta2))
    return NormalizedUnits(P_n=P_n, T_n=T_n, L_n=params.L_n, eps2=eps2, kappa2=kappa2)


def soliton_energy(beta: float) -> float:
    # integral of |2b sech(2b t)|^2 dt
    return 4.0 * beta


def soliton_fwhm(beta: float) -> float:
    return FWHM_SECH / (2.0 * beta)


def power_to_beta(power_W: float, units: NormalizedUnits, separation_fwhm: float = 7.0) -> float:
    """Imaginary eigenvalue part giving average power ``power_W`` for a soliton train.

    Power is one soliton's energy divided by the pulse separation, with the
    separation measured in FWHM widths:
    ``P = P_n * 4 beta / (separation_fwhm * 1.763 / (2 beta))``.
    """
    if not power_W > 0:
        raise ParameterError(f"power_W must be positive, got {power_W!r}")
    if not separation_fwhm > 0:
        raise ParameterError(f"separation_fwhm must be positive, got {separation_fwhm!r}")
    return math.sqrt(power_W * separation_fwhm * FWHM_SECH / (8.0 * units.P_n))


def beta_to_power(beta: float, units: NormalizedUnits, separation_fwhm: float = 7.0) -> float:
    return units.P_n * soliton_energy(beta) / (separation_fwhm * soliton_fwhm(beta))


# key-value config files ----------------------------------------------------

def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = line.split("=", 1)
        elif ":" in line:
            key, value = line.split(":", 1)
        else:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def load_fiber_params(path: str | Path) -> FiberParams:
    values = parse_kv(Path(path).read_text())
    known = {f.name for f in fields(FiberParams)}
    unknown = set(values) - known
    if unknown:
        raise ParameterError(f"unknown fibre parameter keys: {sorted(unknown)}")
    return FiberParams(**{k: float(v) for k, v in values.items()})
