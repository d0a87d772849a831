"""End-to-end SNDR statistics: exact Mellin-Barnes forms, asymptotes, outage and capacity.

Notation. For element i the cascaded envelope is X_i = R_i1 R_i2 with FTR hops, the
aligned fading amplitude is h_F = sum_i X_i, the pointing factor h_P has the power-law
law on [0, A_o], and the SNDR is

    gamma_N = G P / (kappa^2 G P + N_o),   G = |h_L|^2 h_F^2 h_P^2.

Its CDF is F(x) = F_{h_F h_P}(Upsilon(x)) with Upsilon = sqrt(x N_o / (|h_L|^2 P (1 - x kappa^2))).

Writing M_il(s) = sum_j w_j Gamma(1 + j + s/2) / Gamma(1 + j) for the normalised Mellin
transform of hop (i, l) and c_i = prod_l sqrt(2 sigma_il^2), the product CDF is

    F(y) = gamma^2 (2 pi i)^{-L} int prod_i [M_i1 M_i2 Gamma(-s_i) z_i^{s_i}]
           Gamma(S + gamma^2) / (Gamma(1 - S) Gamma(S + gamma^2 + 1)) ds,

with S = sum_i s_i and z_i = A_o c_i / y. The pointing factor couples the variables
through S because the same h_P multiplies every element; for L = 1 this is the
familiar single-integral form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy import special as _sp

from . import foxh
from .errors import CostGuardError, DegeneracyError, DomainError
from .foxh import FoxHSpec, GammaFactor, GammaSeries, MeijerGSpec, QuadSettings
from .ftr import FtrParams, compute_series, envelope_moment
from .specfun import erfc
from .thz_channel import Environment, LinkGeometry, Misalignment, misalign_moment, path_gain

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
MAX_L_EXACT_CDF = 3
MAX_L_EXACT_CAPACITY = 2
CLAMP_WARN = 5e-3


def db_to_lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def ftr_from_db(k_ratio, m, delta, mean_power_db) -> FtrParams:
    """FTR hop from its mean power 2 sigma^2 (1 + K) given in dB."""
    return FtrParams.from_mean_power(k_ratio, m, delta, db_to_lin(mean_power_db))


@dataclass(frozen=True)
class HardwareProfile:
    kappa_s: float = 0.0
    kappa_d: float = 0.0

    def __post_init__(self):
        if self.kappa_s < 0 or self.kappa_d < 0:
            raise DomainError("impairment levels must be >= 0")

    @property
    def kappa_sq(self) -> float:
        return self.kappa_s ** 2 + self.kappa_d ** 2

    @property
    def sndr_ceiling(self) -> float:
        return math.inf if self.kappa_sq == 0 else 1.0 / self.kappa_sq


@dataclass(frozen=True)
class SystemModel:
    """L-element RIS link. ``h_l`` overrides the path gain computed from geometry."""

    hop1: tuple
    hop2: tuple
    mis: Misalignment
    hw: HardwareProfile = HardwareProfile()
    power_w: float = 1.0
    noise_w: float = 1.0
    geom: LinkGeometry | None = None
    env: Environment | None = None
    h_l: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "hop1", tuple(self.hop1))
        object.__setattr__(self, "hop2", tuple(self.hop2))
        if len(self.hop1) != len(self.hop2) or not self.hop1:
            raise DomainError("hop lists must be nonempty and of equal length")
        if not (self.power_w > 0 and self.noise_w > 0):
            raise DomainError("power and noise must be positive")
        if self.h_l is None:
            if self.geom is None:
                raise DomainError("need either h_l or a link geometry")
            object.__setattr__(self, "h_l", path_gain(self.geom, self.env or Environment()))
        if not self.h_l > 0:
            raise DomainError("path gain must be positive")

    @classmethod
    def iid(cls, l_elements: int, hop1: FtrParams, hop2: FtrParams, mis: Misalignment, **kw):
        if l_elements < 1:
            raise DomainError("L must be >= 1")
        return cls((hop1,) * l_elements, (hop2,) * l_elements, mis, **kw)

    @property
    def l_elements(self) -> int:
        return len(self.hop1)

    @property
    def kappa_sq(self) -> float:
        return self.hw.kappa_sq

    @property
    def snr_scale(self) -> float:
        """|h_L|^2 P / N_o."""
        return self.h_l ** 2 * self.power_w / self.noise_w

    def with_power(self, power_w: float) -> "SystemModel":
        return _replace(self, power_w=power_w)

    def ideal(self) -> "SystemModel":
        return _replace(self, hw=HardwareProfile())


def _replace(model, **kw):
    from dataclasses import replace
    return replace(model, **kw)


# ------------------------------------------------------------------ basics

def sndr(h_f, h_p, model: SystemModel):
    g = (np.asarray(h_f, float) * np.asarray(h_p, float) * model.h_l) ** 2
    if np.any(g < 0):
        raise DomainError("amplitudes must be nonnegative")
    p = model.power_w
    out = g * p / (model.kappa_sq * g * p + model.noise_w)
    return float(out) if out.ndim == 0 else out


def upsilon(x, model: SystemModel):
    """Amplitude threshold on h_F h_P equivalent to SNDR <= x (inf at or above the ceiling)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("SNDR threshold must be >= 0")
    denom = model.snr_scale * (1.0 - x * model.kappa_sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, np.sqrt(x / np.where(denom > 0, denom, 1.0)), np.inf)
    return float(out) if out.ndim == 0 else out


def _hop_scale(p: FtrParams) -> float:
    return math.sqrt(2.0 * p.sigma_sq)


def _mellin_series(p: FtrParams, coeff: float = 0.5, shift: float = 0.0) -> GammaSeries:
    """sum_j w_j/Gamma(1+j) Gamma(1 + j + shift + coeff s); coeff=1/2 gives M(s)."""
    ser = compute_series(p)
    j = np.arange(ser.n_t + 1)
    return GammaSeries(ser.log_w - _sp.gammaln(j + 1.0), 1.0 + j + shift, coeff)


def _elem_scale(model: SystemModel, i: int) -> float:
    return _hop_scale(model.hop1[i]) * _hop_scale(model.hop2[i])


# ------------------------------------------------------------------ exact forms

def _hfp_spec(model: SystemModel, kind: str, quad: QuadSettings | None) -> FoxHSpec:
    n = model.l_elements
    g2 = model.mis.gamma_sq
    ones = (1.0,) * n
    inner = tuple((_mellin_series(model.hop1[i]), _mellin_series(model.hop2[i]),
                   GammaFactor(0.0, (-1.0,), True)) for i in range(n))
    top = 1.0 if kind == "cdf" else 0.0  # 1/Gamma(1-S) for the CDF, 1/Gamma(-S) for the PDF
    outer = (GammaFactor(top, tuple(-c for c in ones), False),
             GammaFactor(g2, ones, True),
             GammaFactor(g2 + 1.0, ones, False))
    return FoxHSpec(n, outer, inner, quad=quad or QuadSettings())


def cdf_hfp_exact(y: float, model: SystemModel, quad: QuadSettings | None = None) -> float:
    """P(h_F h_P <= y) from the L-fold Mellin-Barnes integral (unclamped)."""
    if model.l_elements > MAX_L_EXACT_CDF:
        raise CostGuardError(f"exact CDF is limited to L <= {MAX_L_EXACT_CDF}")
    if y <= 0:
        return 0.0
    if math.isinf(y):
        return 1.0
    spec = _hfp_spec(model, "cdf", quad)
    args = [model.mis.a_o * _elem_scale(model, i) / y for i in range(model.l_elements)]
    return model.mis.gamma_sq * foxh.eval_foxh(spec, args)


def pdf_hfp_exact(y: float, model: SystemModel, quad: QuadSettings | None = None) -> float:
    if model.l_elements > MAX_L_EXACT_CDF:
        raise CostGuardError(f"exact PDF is limited to L <= {MAX_L_EXACT_CDF}")
    if not y > 0 or math.isinf(y):
        return 0.0
    spec = _hfp_spec(model, "pdf", quad)
    args = [model.mis.a_o * _elem_scale(model, i) / y for i in range(model.l_elements)]
    return model.mis.gamma_sq / y * foxh.eval_foxh(spec, args)


@dataclass(frozen=True)
class CdfValue:
    value: float
    raw: float

    @property
    def clamp(self) -> float:
        return abs(self.value - self.raw)


def _clamped(raw: float, what: str) -> CdfValue:
    val = min(1.0, max(0.0, raw))
    if abs(val - raw) > CLAMP_WARN:
        log.warning("%s clamped by %.3g", what, abs(val - raw))
    elif val != raw:
        log.debug("%s clamped by %.3g", what, abs(val - raw))
    return CdfValue(val, raw)


def cdf_sndr_exact(x: float, model: SystemModel, quad: QuadSettings | None = None,
                   return_info: bool = False):
    if x < 0:
        raise DomainError("SNDR threshold must be >= 0")
    ups = upsilon(x, model)
    raw = cdf_hfp_exact(ups, model, quad)
    out = _clamped(raw, "exact SNDR CDF")
    return out if return_info else out.value


def cdf_snr_exact(x: float, model: SystemModel, quad: QuadSettings | None = None) -> float:
    return cdf_sndr_exact(x, model.ideal(), quad)


def pdf_sndr_exact(x: float, model: SystemModel, quad: QuadSettings | None = None) -> float:
    if not x > 0:
        raise DomainError("SNDR density needs x > 0")
    if x * model.kappa_sq >= 1.0:
        return 0.0
    ups = upsilon(x, model)
    return pdf_hfp_exact(ups, model, quad) * ups / (2.0 * x * (1.0 - x * model.kappa_sq))


def product_cdf(y: float, p1: FtrParams, p2: FtrParams) -> float:
    """P(R_1 R_2 <= y) for independent FTR envelopes, by 1-D quadrature."""
    from .ftr import cdf_envelope, pdf_envelope
    if y <= 0:
        return 0.0
    s1, s2 = compute_series(p1), compute_series(p2)

    def f(r):
        return cdf_envelope(y / r, p1, s1) * pdf_envelope(r, p2, s2)

    mean2 = math.sqrt(p2.mean_power)
    brk = [0.0, mean2, 3 * mean2, 10 * mean2, 60 * mean2]
    total = 0.0
    for a, b in zip(brk[:-1], brk[1:]):
        total += integrate.quad(f, a, b, limit=200, epsabs=1e-12, epsrel=1e-10)[0]
    return total


def cdf_via_pointing_average(x: float, model: SystemModel, hf_cdf: Callable) -> float:
    """int_0^{A_o} F_{h_F}(Upsilon / y) f_{h_P}(y) dy.

    With u = (y/A_o)^{gamma^2} the pointing density becomes uniform, so the integral is
    int_0^1 F_{h_F}(Upsilon / (A_o u^{1/gamma^2})) du. Empirical CDFs (objects with a
    ``samples`` attribute) are integrated exactly: each atom contributes
    min(1, (Upsilon / (A_o X_k))^{gamma^2}).
    """
    ups = upsilon(x, model)
    if math.isinf(ups):
        return 1.0
    if ups == 0:
        return 0.0
    a_o, g2 = model.mis.a_o, model.mis.gamma_sq
    samples = getattr(hf_cdf, "samples", None)
    if samples is not None:
        xs = np.asarray(samples, dtype=float)
        with np.errstate(divide="ignore"):
            ratio = np.where(xs > 0, ups / (a_o * np.where(xs > 0, xs, 1.0)), np.inf)
        return float(np.mean(np.minimum(1.0, ratio) ** g2))

    def f(u):
        if u <= 0:
            return 1.0
        return float(hf_cdf(ups / (a_o * u ** (1.0 / g2))))

    return float(integrate.quad(f, 0.0, 1.0, limit=200, epsabs=1e-9, epsrel=1e-8)[0])


# ------------------------------------------------------------------ moments and large L

def product_term_moments(model: SystemModel, k: int) -> np.ndarray:
    """E[(R_i1 R_i2)^k] for each element i."""
    if not 0 <= k <= 5:
        raise DomainError("moment order must lie in 0..5")
    return np.array([envelope_moment(k, a) * envelope_moment(k, b)
                     for a, b in zip(model.hop1, model.hop2)])


def sum_moments(model: SystemModel, kmax: int = 5) -> np.ndarray:
    """Omega_1..Omega_kmax of h_F = sum_i X_i by binomial convolution over independent terms."""
    if not 1 <= kmax <= 5:
        raise DomainError("kmax must lie in 1..5")
    mu = np.array([product_term_moments(model, k) for k in range(kmax + 1)])  # (k, i)
    mu[0] = 1.0  # the truncated series would give 1 - O(tol) and compound over L
    acc = np.zeros(kmax + 1)
    acc[0] = 1.0
    for i in range(model.l_elements):
        new = np.zeros_like(acc)
        for k in range(kmax + 1):
            new[k] = sum(math.comb(k, r) * acc[r] * mu[k - r, i] for r in range(k + 1))
        acc = new
    return acc[1:]


def hf_gaussian_cdf(model: SystemModel) -> Callable:
    """Central-limit surrogate for the CDF of h_F."""
    mu1 = product_term_moments(model, 1)
    mu2 = product_term_moments(model, 2)
    mean = float(mu1.sum())
    var = float((mu2 - mu1 ** 2).sum())
    sd = math.sqrt(2.0 * var)

    def cdf(y):
        return 0.5 * erfc(-(np.asarray(y, float) - mean) / sd)

    cdf.mean, cdf.var = mean, var
    return cdf


def cdf_high_l_clt(x: float, model: SystemModel) -> float:
    return cdf_via_pointing_average(x, model, hf_gaussian_cdf(model))


@dataclass(frozen=True)
class FiveMomentFit:
    omega: np.ndarray
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float
    a7: float

    @classmethod
    def from_moments(cls, omega: Sequence[float]) -> "FiveMomentFit":
        om = np.asarray(omega, dtype=float)
        if om.size < 4 or np.any(om[:4] <= 0):
            raise DomainError("need positive moments Omega_1..Omega_4")
        o1 = om[0]
        phi = np.concatenate([[o1], om[1:] / om[:-1]])  # phi_i = Omega_i / Omega_{i-1}
        p2, p3, p4 = phi[1], phi[2], phi[3]
        a3 = (4 * p4 - 9 * p3 + 6 * p2 - o1) / (3 * p3 - p4 - 3 * p2 + o1)
        a2 = a3 / 2 * (p4 - 2 * p3 + p2) + 2 * p4 - 3 * p3 + p2
        a6 = (a3 * (p2 - o1) + 2 * p2 - o1) / a2 - 3
        disc = (a6 + 2) ** 2 - 4 * o1 * (a3 + 1) / a2
        if disc < 0:
            raise DegeneracyError(f"5FM coefficient a7 is imaginary (discriminant {disc:.3g})")
        a7 = math.sqrt(disc)
        a4, a5 = (a6 + a7) / 2, (a6 - a7) / 2
        a1 = math.exp(math.lgamma(a3 + 1) - math.lgamma(a4 + 1) - math.lgamma(a5 + 1)) / a2
        return cls(om, a1, a2, a3, a4, a5, a6, a7)

    def hf_cdf(self, y: float) -> float:
        """Approximate CDF of h_F: a1 a2 G^{2,1}_{2,3}(y/a2 | 1, a3+1; a4+1, a5+1, 0)."""
        if y <= 0:
            return 0.0
        spec = MeijerGSpec(2, 1, 2, 3, (1.0, self.a3 + 1), (self.a4 + 1, self.a5 + 1, 0.0))
        return self.a1 * self.a2 * foxh.eval_meijer_g(spec, y / self.a2)


def five_moment_fit(model: SystemModel) -> FiveMomentFit:
    return FiveMomentFit.from_moments(sum_moments(model, 5))


def cdf_high_l_5fm(x: float, model: SystemModel, fit: FiveMomentFit | None = None) -> float:
    fit = fit or five_moment_fit(model)
    ups = upsilon(x, model)
    if math.isinf(ups):
        return 1.0
    if ups == 0:
        return 0.0
    g2 = model.mis.gamma_sq
    spec = MeijerGSpec(3, 1, 3, 4, (1.0, fit.a3 + 1, g2 + 1), (fit.a4 + 1, fit.a5 + 1, g2, 0.0))
    raw = fit.a1 * fit.a2 * g2 * foxh.eval_meijer_g(spec, ups / (model.mis.a_o * fit.a2))
    return _clamped(raw, "5FM CDF").value


def _tie(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def op_high_snr(x: float, model: SystemModel, fit: FiveMomentFit | None = None) -> float:
    """Leading residue of the 5FM integral at a_min = min(a4+1, a5+1, gamma^2)."""
    fit = fit or five_moment_fit(model)
    g2 = model.mis.gamma_sq
    a4, a5 = fit.a4, fit.a5
    cands = [a4 + 1, a5 + 1, g2]
    a_min = min(cands)
    if sum(_tie(a_min, c) for c in cands) > 1:
        raise DegeneracyError("coincident leading poles among a4+1, a5+1, gamma^2")
    lg = math.lgamma
    if _tie(a_min, a4 + 1):
        lim = (lg(a5 - a4), lg(g2 - a4 - 1), lg(a4 + 1))
        sgn = math.copysign(1, math.gamma(a5 - a4)) * math.copysign(1, math.gamma(g2 - a4 - 1))
    elif _tie(a_min, a5 + 1):
        lim = (lg(a4 - a5), lg(g2 - a5 - 1), lg(a5 + 1))
        sgn = math.copysign(1, math.gamma(a4 - a5)) * math.copysign(1, math.gamma(g2 - a5 - 1))
    else:
        lim = (lg(a4 + 1 - g2), lg(a5 + 1 - g2), lg(g2))
        sgn = 1.0
    ups = upsilon(x, model)
    log_den = lg(g2 + 1 - a_min) + lg(fit.a3 + 1 - a_min) + lg(a_min + 1)
    val = math.exp(sum(lim) - log_den) * sgn
    return val * (ups / (model.mis.a_o * fit.a2)) ** a_min * fit.a1 * fit.a2 * g2


def high_snr_slope(model: SystemModel, fit: FiveMomentFit | None = None) -> float:
    fit = fit or five_moment_fit(model)
    return min(fit.a4 + 1, fit.a5 + 1, model.mis.gamma_sq) / 2.0


# ------------------------------------------------------------------ high SNDR

def negative_moment_hf(s: float, model: SystemModel, quad: QuadSettings | None = None) -> float:
    """E[h_F^{-s}] for 0 < s < 2L (L <= 2).

    For two elements, (X_1 + X_2)^{-s} = (2 pi i)^{-1} int Gamma(-u) Gamma(s+u)/Gamma(s)
    X_1^u X_2^{-s-u} du, and the expectation factorises inside the integral.
    """
    n = model.l_elements
    if not 0 < s < 2 * n:
        raise DomainError(f"E[h_F^-s] needs 0 < s < 2L = {2 * n}")
    if n == 1:
        return float(product_term_moments_general(model, 0, -s))
    if n > 2:
        raise CostGuardError("negative moments of h_F are implemented for L <= 2")
    c1, c2 = _elem_scale(model, 0), _elem_scale(model, 1)
    inner = (GammaFactor(0.0, (-1.0,), True), GammaFactor(s, (1.0,), True),
             _mellin_series(model.hop1[0]), _mellin_series(model.hop2[0]),
             _mellin_series(model.hop1[1], -0.5, -0.5 * s), _mellin_series(model.hop2[1], -0.5, -0.5 * s))
    spec = FoxHSpec(1, (), (inner,), quad=quad or QuadSettings())
    val = foxh.eval_foxh(spec, [c1 / c2])
    return val * c2 ** (-s) / math.gamma(s)


def product_term_moments_general(model: SystemModel, i: int, s: float) -> float:
    """E[(R_i1 R_i2)^s] for real s > -2."""
    return envelope_moment(s, model.hop1[i]) * envelope_moment(s, model.hop2[i])


def _printed_high_sndr(x: float, model: SystemModel) -> float:
    """Term-by-term residue sum with the per-element pointing factor as printed."""
    g2 = model.mis.gamma_sq
    ups = upsilon(x, model)
    lg = math.lgamma
    # per element: {varpi: sum of coefficient * residue factor * z^{-varpi}}
    per_elem = []
    for i in range(model.l_elements):
        s1, s2 = compute_series(model.hop1[i]), compute_series(model.hop2[i])
        z = model.mis.a_o * _elem_scale(model, i) / ups
        acc: dict[float, float] = {}
        for j1 in range(s1.n_t + 1):
            for j2 in range(s2.n_t + 1):
                w = s1.log_w[j1] + s2.log_w[j2] - lg(j1 + 1.0) - lg(j2 + 1.0)
                cands = [g2, 2 + 2 * j1, 2 + 2 * j2]
                vp = min(cands)
                if sum(_tie(vp, c) for c in cands) > 1:
                    raise DegeneracyError(
                        f"double pole at varpi={vp:g} (j1={j1}, j2={j2}, gamma^2={g2:g})")
                if _tie(vp, g2):
                    val = math.exp(lg(1 + j1 - g2 / 2) + lg(1 + j2 - g2 / 2) + lg(g2) + w)
                elif _tie(vp, 2 + 2 * j1):
                    val = (math.gamma(j2 - j1) * math.exp(lg(2 + 2 * j1) + w)
                           * math.gamma(g2 - 2 - 2 * j1))
                else:
                    val = (math.gamma(j1 - j2) * math.exp(lg(2 + 2 * j2) + w)
                           * math.gamma(g2 - 2 - 2 * j2))
                val *= z ** (-vp) / math.gamma(g2 - vp + 1)
                acc[vp] = acc.get(vp, 0.0) + val
        per_elem.append(acc)
    total = {0.0: 1.0}
    for acc in per_elem:
        nxt: dict[float, float] = {}
        for a, va in total.items():
            for b, vb in acc.items():
                nxt[a + b] = nxt.get(a + b, 0.0) + va * vb
        total = nxt
    return g2 * sum(v / math.gamma(1 + s) for s, v in total.items())


def cdf_high_sndr(x: float, model: SystemModel, method: str = "coupled") -> float:
    """Leading high-SNDR term of the CDF.

    ``coupled`` keeps the residue at S = -gamma^2 of the coupled pointing factor:
    F ~ (Upsilon/A_o)^{gamma^2} E[h_F^{-gamma^2}], valid while gamma^2 < 2L.
    ``printed`` sums per-element residues at varpi_i = min(gamma^2, 2+2j_i1, 2+2j_i2);
    it agrees with ``coupled`` for L = 1 and raises DegeneracyError on double poles.
    """
    ups = upsilon(x, model)
    if math.isinf(ups):
        return 1.0
    g2 = model.mis.gamma_sq
    if method == "printed":
        return _printed_high_sndr(x, model)
    if method != "coupled":
        raise DomainError(f"unknown high-SNDR method {method!r}")
    if g2 >= 2 * model.l_elements:
        raise DegeneracyError(
            f"gamma^2={g2:g} >= 2L: the fading poles lead and the pointing residue is not dominant")
    return (ups / model.mis.a_o) ** g2 * negative_moment_hf(g2, model)


# ------------------------------------------------------------------ outage

def outage(gamma_th: float, model: SystemModel, method: str = "exact", **kw) -> float:
    """P(SNDR < gamma_th) by the chosen method."""
    if gamma_th < 0:
        raise DomainError("threshold must be >= 0")
    if gamma_th * model.kappa_sq >= 1.0:
        return 1.0
    if method == "exact":
        return cdf_sndr_exact(gamma_th, model)
    if method == "clt":
        return cdf_high_l_clt(gamma_th, model)
    if method == "5fm":
        return cdf_high_l_5fm(gamma_th, model)
    if method == "high-sndr":
        return cdf_high_sndr(gamma_th, model, kw.get("variant", "coupled"))
    if method == "pointing-mc":
        from .montecarlo import McRun, empirical_hf
        run = McRun(model, kw.get("n_samples", 1_000_000), kw.get("seed", 0))
        return cdf_via_pointing_average(gamma_th, model, empirical_hf(run))
    raise DomainError(f"unknown outage method {method!r}")


# ------------------------------------------------------------------ expectation and capacity

def e_opt(model: SystemModel) -> float:
    """Largest achievable E[|h_L h_P h_F|] with aligned phases."""
    g2, a_o = model.mis.gamma_sq, model.mis.a_o
    return model.h_l * g2 * a_o / (g2 + 1.0) * float(product_term_moments(model, 1).sum())


def _ehfp_foxh(model: SystemModel, e: float, s: float = 2.0,
               quad: QuadSettings | None = None) -> float:
    """E[(h_F h_P)^s exp(-e h_F h_P)] from the regularised Mellin-Barnes form."""
    n = model.l_elements
    if n > MAX_L_EXACT_CDF:
        raise CostGuardError(f"Fox-H moment path is limited to L <= {MAX_L_EXACT_CDF}")
    g2 = model.mis.gamma_sq
    ones = (1.0,) * n
    neg = tuple(-c for c in ones)
    inner = tuple((_mellin_series(model.hop1[i]), _mellin_series(model.hop2[i]),
                   GammaFactor(0.0, (-1.0,), True)) for i in range(n))
    outer = (GammaFactor(s, neg, True), GammaFactor(0.0, neg, False),
             GammaFactor(g2, ones, True), GammaFactor(g2 + 1.0, ones, False))
    spec = FoxHSpec(n, outer, inner, quad=quad or QuadSettings())
    args = [e * model.mis.a_o * _elem_scale(model, i) for i in range(n)]
    return g2 * e ** (-s) * foxh.eval_foxh(spec, args)


def e_hfp_sq(model: SystemModel, method: str = "moments", e: float = 1e-6, **kw) -> float:
    """E[|h_F h_P|^2].

    ``moments``: Omega_2 gamma^2/(gamma^2+2) A_o^2 (independence of h_F and h_P).
    ``foxh``: regularised Mellin-Barnes integral with damping e; ill-conditioned for
    L >= 2 at the customary e = 1e-6, see the notes. ``mc``: sample mean.
    """
    g2, a_o = model.mis.gamma_sq, model.mis.a_o
    if method == "moments":
        return float(sum_moments(model, 2)[1]) * misalign_moment(2.0, model.mis)
    if method == "foxh":
        return _ehfp_foxh(model, e, 2.0, kw.get("quad"))
    if method == "mc":
        from .montecarlo import McRun, sample_hfp
        run = McRun(model, kw.get("n_samples", 1_000_000), kw.get("seed", 0))
        return float(np.mean(sample_hfp(run) ** 2))
    raise DomainError(f"unknown method {method!r}")


def capacity_upper_nonideal(model: SystemModel, **kw) -> float:
    g = model.h_l ** 2 * e_hfp_sq(model, **kw)
    p = model.power_w
    return math.log2(1.0 + p * g / (p * model.kappa_sq * g + model.noise_w))


def capacity_upper_ideal(model: SystemModel, **kw) -> float:
    g = model.h_l ** 2 * e_hfp_sq(model, **kw)
    return math.log2(1.0 + model.power_w * g / model.noise_w)


def capacity_exact_ideal(model: SystemModel, e: float = 1e-6,
                         quad: QuadSettings | None = None) -> float:
    """E[log2(1 + gamma_I) exp(-e gamma_I)] from an (L+1)-fold Mellin-Barnes integral.

    ln(1+x) = (2 pi i)^{-1} int Gamma(1+u) Gamma(-u)^2 / Gamma(1-u) x^{-u} du, -1 < Re u < 0,
    and the damped x-integral contributes e^{S/2+u} Gamma(-S/2-u). The damping biases the
    result by about -e E[gamma_I ln(1+gamma_I)]; e = 1e-6 is negligible for moderate SNR.
    """
    n = model.l_elements
    if n > MAX_L_EXACT_CAPACITY:
        raise CostGuardError(f"exact capacity is limited to L <= {MAX_L_EXACT_CAPACITY}")
    g2 = model.mis.gamma_sq
    ones = (1.0,) * n
    outer = (GammaFactor(0.0, tuple(-c for c in ones) + (0.0,), False),
             GammaFactor(g2, ones + (0.0,), True),
             GammaFactor(g2 + 1.0, ones + (0.0,), False),
             GammaFactor(0.0, tuple(-0.5 for _ in ones) + (-1.0,), True))
    inner = tuple((_mellin_series(model.hop1[i]), _mellin_series(model.hop2[i]),
                   GammaFactor(0.0, (-1.0,), True)) for i in range(n))
    inner += ((GammaFactor(1.0, (1.0,), True), GammaFactor(0.0, (-1.0,), True),
               GammaFactor(0.0, (-1.0,), True), GammaFactor(1.0, (-1.0,), False)),)
    spec = FoxHSpec(n + 1, outer, inner, quad=quad or QuadSettings())
    root = math.sqrt(e * model.snr_scale)
    args = [model.mis.a_o * _elem_scale(model, i) * root for i in range(n)] + [e]
    nats = 0.5 * g2 * foxh.eval_foxh(spec, args)
    return nats / LN2
