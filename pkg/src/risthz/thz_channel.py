"""Deterministic THz gains (Friis spreading, water-vapour absorption) and pointing-error fading.

Absorption follows a simplified 275-400 GHz line model with two water-vapour resonances
plus a cubic background. The vapour parameter is evaluated with temperature in degrees
Celsius, relative humidity in percent and pressure in hPa; with those units the model
gives a volume mixing ratio near 0.018 at 27 C, 50 %, 1 atm, which is the physical value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PoleError
from .specfun import erf

C_LIGHT = 299_792_458.0
BAND_HZ = (275e9, 400e9)

# resonance centres in cm^-1 and the cubic background (Hz^-k coefficients)
_C1, _C2 = 10.835, 12.664
_P1, _P2, _P3, _P4 = 5.54e-37, -3.94e-25, 9.06e-14, -6.36e-3
_T_POLE = -240.97


@dataclass(frozen=True)
class Environment:
    temperature_c: float = 27.0
    pressure_pa: float = 101325.0
    rel_humidity: float = 0.5

    def __post_init__(self):
        if not self.pressure_pa > 0:
            raise DomainError("pressure must be positive")
        if not 0.0 <= self.rel_humidity <= 1.0:
            raise DomainError("relative humidity must lie in [0, 1]")
        if self.temperature_c == _T_POLE:
            raise PoleError("temperature at the pole of the vapour formula (-240.97 C)")
        if self.temperature_c < _T_POLE:
            raise DomainError("temperature below -240.97 C")


@dataclass(frozen=True)
class LinkGeometry:
    freq_hz: float = 300e9
    d1_m: float = 30.0
    d2_m: float = 20.0
    gt: float = 1e4
    gr: float = 1e4

    def __post_init__(self):
        check_band(self.freq_hz)
        if not (self.d1_m > 0 and self.d2_m > 0):
            raise DomainError("distances must be positive")
        if not (self.gt > 0 and self.gr > 0):
            raise DomainError("antenna gains must be positive")


@dataclass(frozen=True)
class Misalignment:
    """Pointing-error model. Built from beam geometry, or directly via ``from_shape``."""

    detect_radius_a: float
    beam_radius_wd: float
    jitter_sigma_s: float
    u: float
    a_o: float
    gamma_sq: float
    w_eq_sq: float

    @classmethod
    def from_geometry(cls, detect_radius_a=0.01, beam_radius_wd=0.06, jitter_sigma_s=0.01):
        if not (detect_radius_a > 0 and beam_radius_wd > 0 and jitter_sigma_s > 0):
            raise DomainError("misalignment lengths must be positive")
        u = math.sqrt(math.pi) * detect_radius_a / (math.sqrt(2.0) * beam_radius_wd)
        eu = float(erf(u))
        w_eq_sq = beam_radius_wd ** 2 * math.sqrt(math.pi) * eu / (2.0 * u * math.exp(-u * u))
        return cls(detect_radius_a, beam_radius_wd, jitter_sigma_s, u, eu * eu,
                   w_eq_sq / (4.0 * jitter_sigma_s ** 2), w_eq_sq)

    @classmethod
    def from_shape(cls, a_o: float, gamma_sq: float):
        """Direct (A_o, gamma^2) specification; geometry fields are left as NaN."""
        if not 0.0 < a_o <= 1.0:
            raise DomainError("A_o must lie in (0, 1]")
        if not gamma_sq > 0:
            raise DomainError("gamma^2 must be positive")
        nan = float("nan")
        return cls(nan, nan, nan, nan, a_o, gamma_sq, nan)

    def mean(self) -> float:
        return misalign_moment(1.0, self)


def check_band(freq_hz) -> None:
    f = np.asarray(freq_hz, dtype=float)
    if np.any(f < BAND_HZ[0]) or np.any(f > BAND_HZ[1]):
        raise DomainError(
            "absorption model only covers 275-400 GHz; higher bands need line-by-line "
            "(HITRAN) data, which is not supported")


def vapor_param(env: Environment) -> float:
    """Water-vapour volume mixing ratio v. Inputs converted to C, percent and hPa."""
    phi = 100.0 * env.rel_humidity
    p = env.pressure_pa / 100.0
    t = env.temperature_c
    return phi * (0.06116 / p + 2.1148e-7) * math.exp(17.502 * t / (240.97 + t))


def absorption_coefficient(freq_hz, env: Environment):
    """kappa_alpha(f) in 1/m."""
    check_band(freq_hz)
    f = np.asarray(freq_hz, dtype=float)
    v = vapor_param(env)
    a = 0.2205 * v * (0.1303 * v + 0.0294)
    b = (0.4093 * v + 0.0925) ** 2
    c = 2.014 * v * (0.1702 * v + 0.0303)
    d = (0.537 * v + 0.0956) ** 2
    nu = f / (100.0 * C_LIGHT)  # wavenumber in cm^-1
    out = (a / (b + (nu - _C1) ** 2) + c / (d + (nu - _C2) ** 2)
           + ((_P1 * f + _P2) * f + _P3) * f + _P4)
    return float(out) if out.ndim == 0 else out


def absorption_gain(geom: LinkGeometry, env: Environment) -> float:
    k = absorption_coefficient(geom.freq_hz, env)
    return math.exp(-0.5 * k * (geom.d1_m + geom.d2_m))


def propagation_gain(geom: LinkGeometry) -> float:
    """Friis amplitude gain of the two-segment path."""
    return (C_LIGHT ** 2 * math.sqrt(geom.gt * geom.gr)
            / ((4.0 * math.pi * geom.freq_hz) ** 2 * geom.d1_m * geom.d2_m))


def path_gain(geom: LinkGeometry, env: Environment) -> float:
    return propagation_gain(geom) * absorption_gain(geom, env)


def _check_support(x, mis: Misalignment):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > mis.a_o):
        raise DomainError(f"pointing-error amplitude must lie in [0, A_o={mis.a_o:g}]")
    return x


def misalign_pdf(x, mis: Misalignment):
    x = _check_support(x, mis)
    g2 = mis.gamma_sq
    with np.errstate(divide="ignore"):
        out = g2 * mis.a_o ** (-g2) * x ** (g2 - 1.0)
    return float(out) if out.ndim == 0 else out


def misalign_cdf(x, mis: Misalignment):
    x = _check_support(x, mis)
    out = (x / mis.a_o) ** mis.gamma_sq
    return float(out) if out.ndim == 0 else out


def misalign_moment(s: float, mis: Misalignment) -> float:
    """E[h_P^s] = gamma^2/(gamma^2+s) A_o^s, finite for s > -gamma^2."""
    if not s > -mis.gamma_sq:
        raise DomainError(f"moment of order {s} diverges (need s > -gamma^2 = {-mis.gamma_sq:g})")
    return mis.gamma_sq / (mis.gamma_sq + s) * mis.a_o ** s


def misalign_sample(mis: Misalignment, seed, n: int) -> np.ndarray:
    """Inverse-CDF draws: A_o U^{1/gamma^2}."""
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return mis.a_o * rng.random(n) ** (1.0 / mis.gamma_sq)
