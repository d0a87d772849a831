"""Fluctuating two-ray (FTR) fading: coefficient series, densities, moments and a sampler.

The squared envelope is a mixture of Gamma(j+1, 2 sigma^2) laws with weights

    w_j = m^m / Gamma(m) * K^j d_j / j!

where d_j is the Legendre-function series below. All heavy lifting is done in log
space because Gamma(n+m) and the Legendre values overflow long before the weights do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import special as _sp

from .errors import DomainError, NonConvergenceError, OverflowRangeError
from .specfun import gamma_regularized_lower

N_T_START = 40
N_T_STEP = 20
N_T_MAX = 200
IMAG_RESIDUE_TOL = 1e-9


@dataclass(frozen=True)
class FtrParams:
    """One FTR hop. ``sigma_sq`` is the diffuse variance per real dimension."""

    k_ratio: float
    m: float
    delta: float
    sigma_sq: float

    def __post_init__(self):
        if not self.k_ratio >= 0:
            raise DomainError("K must be >= 0")
        if not self.m > 0:
            raise DomainError("m must be > 0")
        if not 0.0 <= self.delta <= 1.0:
            raise DomainError("delta must lie in [0, 1]")
        if not self.sigma_sq > 0:
            raise DomainError("sigma_sq must be > 0")

    @property
    def mean_power(self) -> float:
        return 2.0 * self.sigma_sq * (1.0 + self.k_ratio)

    @classmethod
    def from_mean_power(cls, k_ratio, m, delta, mean_power) -> "FtrParams":
        return cls(k_ratio, m, delta, mean_power / (2.0 * (1.0 + k_ratio)))

    @classmethod
    def from_sigma(cls, k_ratio, m, delta, sigma) -> "FtrParams":
        return cls(k_ratio, m, delta, sigma * sigma)


@dataclass(frozen=True)
class FtrSeries:
    """Truncated coefficient series d_0..d_{n_t} and the derived mixture weights."""

    d: np.ndarray
    n_t: int
    trunc_metric: float
    log_w: np.ndarray = field(repr=False)
    sum_d: float = 0.0
    max_imag_residue: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_w)

    @property
    def normalization(self) -> float:
        return float(np.sum(self.weights))


def _mp_hyp2f1(ctx, a, b, c, y):
    """Gauss series in the given mpmath context, 0 <= y < 1."""
    total = term = ctx.mpf(1)
    if y == 0:
        return total
    settle = max(0, int(-a) + 1, int(-b) + 1)
    k = 0
    while True:
        term = term * (a + k) * (b + k) / ((c + k) * (k + 1)) * y
        total += term
        k += 1
        if k > settle and abs(term) <= ctx.eps * abs(total):
            return total
        if k > 50000:
            raise NonConvergenceError("Legendre seed series did not converge")


def _mp_legendre(ctx, nu, mu, x):
    """P_nu^mu(x) for x > 1; same hypergeometric representation as specfun.legendre_p_log."""
    y = (x - 1) / (x + 1)
    base = ((1 + x) / 2) ** nu
    if mu <= 0:
        f = _mp_hyp2f1(ctx, -nu, -nu - mu, 1 - mu, y)
        return base * y ** (ctx.mpf(-mu) / 2) * f / ctx.gamma(1 - mu)
    f = _mp_hyp2f1(ctx, mu - nu, -nu, mu + 1, y)
    poch = ctx.rf(-nu, mu) * ctx.rf(-nu - mu, mu) / ctx.factorial(mu)
    return base * y ** (ctx.mpf(mu) / 2) * poch * f


def _legendre_log_d(n_t: int, m: float, k_ratio: float, delta: float, dps: int):
    """log d_n, n = 0..n_t, from the Legendre double sum at ``dps`` working digits.

    The (k, l) sum is regrouped by order mu = k - 2l. The grouped coefficients
    a_mu(n) = sum_{k-2l=mu} C(n,k) (delta/2)^k C(k,l) are the Fourier coefficients of
    (1 + delta cos t)^n and obey a three-term recursion in n; P^mu_{n+m-1} is advanced in
    degree by the usual recurrence. Returns (log d, max relative imaginary residue,
    digits lost to cancellation).
    """
    ctx = mpmath.MPContext()
    ctx.dps = dps
    m_, kr, dl = ctx.mpf(m), ctx.mpf(k_ratio), ctx.mpf(delta)
    q = (m_ + kr) ** 2 - (kr * dl) ** 2
    x = (m_ + kr) / ctx.sqrt(q)
    log_q = ctx.log(q)
    trivial = delta == 0.0 or k_ratio == 0.0
    # gam[i] = Gamma(m + i), i = 0..2 n_t
    gam = [ctx.gamma(m_)]
    for i in range(1, 2 * n_t + 1):
        gam.append(gam[-1] * (m_ + i - 1))
    half_d = dl / 2
    coef = {0: ctx.mpf(1)}
    chains: dict[int, list] = {}
    quarter = (1, -1j, -1, 1j)
    out, worst_res, worst_loss = [], 0.0, 0.0
    for n in range(n_t + 1):
        if n > 0 and not trivial:
            zero = ctx.zero
            coef = {mu: coef.get(mu, zero) + half_d * (coef.get(mu - 1, zero) + coef.get(mu + 1, zero))
                    for mu in range(-n, n + 1)}
        re = im = mag = ctx.zero
        for mu, a_mu in coef.items():
            if trivial:
                p = ctx.one
            else:
                lo = abs(mu)
                ch = chains.setdefault(mu, [])
                while len(ch) < n - lo + 1:
                    deg = len(ch) + lo + m_ - 1
                    if len(ch) < 2:
                        ch.append(_mp_legendre(ctx, deg, mu, x))
                    else:
                        v = deg - 1
                        ch.append(((2 * v + 1) * x * ch[-1] - (v + mu) * ch[-2]) / (v - mu + 1))
                p = ch[n - lo]
            term = a_mu * gam[n - mu] * p
            # e^{i pi (2l-k)/2} = i^{-mu}; the Legendre branch with the cut on (1, inf)
            # contributes a further e^{-i pi mu/2} relative to the real function above
            ph = quarter[mu % 4] * quarter[mu % 4]
            if ph.imag == 0:
                re += term if ph.real > 0 else -term
            else:
                im += term if ph.imag > 0 else -term
            mag += abs(term)
        if re <= 0:
            return None, 0.0, math.inf
        worst_res = max(worst_res, float(abs(im) / re))
        worst_loss = max(worst_loss, float(ctx.log10(mag / re)))
        out.append(float(ctx.log(re) - (n + m_) / 2 * log_q))
    return out, worst_res, worst_loss


GUARD_DIGITS = 20
MAX_DPS = 2000


def legendre_log_coefficients(n_t: int, m: float, k_ratio: float, delta: float):
    """log d_0..log d_{n_t}, raising the working precision until GUARD_DIGITS survive."""
    ratio = (1.0 + delta) / max(1.0 - delta, 1e-3)
    dps = GUARD_DIGITS + 10 + int(n_t * math.log10(ratio))
    while True:
        vals, res, loss = _legendre_log_d(n_t, m, k_ratio, delta, dps)
        if vals is not None and dps - loss >= GUARD_DIGITS:
            return np.array(vals), res
        dps = 2 * dps if vals is None else int(loss) + GUARD_DIGITS + 10
        if dps > MAX_DPS:
            raise OverflowRangeError(
                f"d_j needs more than {MAX_DPS} digits (m={m}, K={k_ratio}, delta={delta})")


class _SeriesCache:
    """log d_n table for one (m, K, delta) triple, recomputed when more terms are needed."""

    def __init__(self, m, k_ratio, delta):
        self.m, self.k_ratio, self.delta = m, k_ratio, delta
        self.log_d = np.empty(0)
        self.max_residue = 0.0

    def extend_to(self, n_t: int):
        if len(self.log_d) < n_t + 1:
            # grow geometrically so the 20-term truncation steps reuse one evaluation
            target = min(N_T_MAX, max(n_t, 2 * (len(self.log_d) - 1)))
            self.log_d, res = legendre_log_coefficients(target, self.m, self.k_ratio, self.delta)
            if res > IMAG_RESIDUE_TOL:
                raise NonConvergenceError(
                    f"imaginary residue {res:.2e} in d_j exceeds {IMAG_RESIDUE_TOL}")
            self.max_residue = max(self.max_residue, res)
        return self.log_d[: n_t + 1]


@lru_cache(maxsize=256)
def _cached(m, k_ratio, delta):
    return _SeriesCache(m, k_ratio, delta)


PHASE_NODES = 256


def _phase_average_log_w(n_t: int, m: float, k_ratio: float, delta: float) -> np.ndarray:
    """log w_j as the average over the specular phase difference of negative-binomial weights.

    Conditioned on the phase difference a, the hop is Rician-shadowed with
    K(a) = K (1 + delta cos a), whose power law is a Gamma(j+1) mixture with
    negative-binomial weights. Every term is positive, so double precision suffices.
    """
    x, wq = np.polynomial.legendre.leggauss(PHASE_NODES)
    a = 0.5 * np.pi * (x + 1.0)
    ka = k_ratio * (1.0 + delta * np.cos(a))
    j = np.arange(n_t + 1)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.where(j == 0, 0.0, j * np.log(ka / (m + ka)))
    lt = (_sp.gammaln(m + j) - math.lgamma(m) - _sp.gammaln(j + 1.0)
          + m * np.log(m / (m + ka)) + log_p + np.log(0.5 * wq))
    top = lt.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        return (top + np.log(np.exp(lt - np.where(np.isfinite(top), top, 0.0)).sum(axis=1,
                keepdims=True))).ravel()


def compute_series(params: FtrParams, tol: float = 1e-6, method: str = "legendre") -> FtrSeries:
    """Truncated d_j series, grown from 40 terms until the mixture weights sum to 1 within tol.

    ``legendre`` sums the Legendre-function representation at adaptive precision;
    ``phase-average`` integrates the weights over the specular phase difference in double
    precision, which is much faster and is used for fitting.
    """
    if not tol > 0:
        raise DomainError("tol must be > 0")
    if method not in ("legendre", "phase-average"):
        raise DomainError(f"unknown series method {method!r}")
    m, kr, delta = float(params.m), float(params.k_ratio), float(params.delta)
    cache = _cached(m, kr, delta) if method == "legendre" else None
    log_norm = m * math.log(m) - math.lgamma(m)
    n_t = N_T_START
    while True:
        j = np.arange(n_t + 1)
        if kr == 0.0:
            log_k = np.where(j == 0, 0.0, -np.inf)
        else:
            log_k = j * math.log(kr)
        if cache is not None:
            log_d = cache.extend_to(n_t)
            log_w = log_norm + log_k - _sp.gammaln(j + 1) + log_d
        else:
            log_w = _phase_average_log_w(n_t, m, kr, delta)
            with np.errstate(invalid="ignore"):
                log_d = np.where(np.isfinite(log_k), log_w - log_norm - log_k + _sp.gammaln(j + 1),
                                 _sp.gammaln(j + m) - (j + m) * math.log(m))
        metric = abs(1.0 - float(np.sum(np.exp(log_w))))
        if metric <= tol:
            break
        if n_t >= N_T_MAX:
            raise NonConvergenceError(
                f"FTR series needs more than {N_T_MAX} terms for tol={tol:g} "
                f"(K={kr}, m={m}, delta={delta}; residual {metric:.2e})")
        n_t = min(n_t + N_T_STEP, N_T_MAX)
    if np.max(log_d) > 700:
        raise OverflowRangeError(
            f"d_j overflows double precision for K={kr}, m={m}, delta={delta}; "
            "supported range is roughly m, K <= 100")
    d = np.exp(log_d)
    return FtrSeries(d=d, n_t=n_t, trunc_metric=metric, log_w=log_w,
                     sum_d=float(np.sum(d)),
                     max_imag_residue=cache.max_residue if cache is not None else 0.0)


def _as_series(params, series):
    return series if series is not None else compute_series(params)


def pdf_power(g, params: FtrParams, series: FtrSeries | None = None):
    """Density of the squared envelope."""
    s = _as_series(params, series)
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise DomainError("power must be >= 0")
    two_s2 = 2.0 * params.sigma_sq
    j = np.arange(s.n_t + 1)[:, None]
    gg = np.atleast_1d(g)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_g = np.where(j == 0, 0.0, j * np.log(gg))
    logt = s.log_w[:, None] + log_g - gg / two_s2 - _sp.gammaln(j + 1) - (j + 1) * math.log(two_s2)
    out = np.exp(logt).sum(axis=0)
    return out.reshape(g.shape) if g.ndim else float(out[0])


def cdf_power(g, params: FtrParams, series: FtrSeries | None = None):
    s = _as_series(params, series)
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise DomainError("power must be >= 0")
    j = np.arange(s.n_t + 1)[:, None]
    vals = gamma_regularized_lower(j + 1.0, np.atleast_1d(g)[None, :] / (2.0 * params.sigma_sq))
    out = np.clip(s.weights @ vals, 0.0, 1.0)
    return out.reshape(g.shape) if g.ndim else float(out[0])


def pdf_envelope(r, params: FtrParams, series: FtrSeries | None = None):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("amplitude must be >= 0")
    return 2.0 * r * pdf_power(r * r, params, series)


def cdf_envelope(r, params: FtrParams, series: FtrSeries | None = None):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("amplitude must be >= 0")
    return cdf_power(r * r, params, series)


def envelope_moment(s: float, params: FtrParams, series: FtrSeries | None = None) -> float:
    """E[R^s] by term-wise integration of the mixture."""
    if not s > -2:
        raise DomainError(f"moment of order {s} diverges (need s > -2)")
    ser = _as_series(params, series)
    j = np.arange(ser.n_t + 1)
    logt = (ser.log_w + 0.5 * s * math.log(2.0 * params.sigma_sq)
            + _sp.gammaln(j + 1 + 0.5 * s) - _sp.gammaln(j + 1))
    return float(np.exp(logt).sum())


def mellin_log_terms(params: FtrParams, series: FtrSeries | None = None):
    """(log c_j, offsets) with E[R^s] = sum_j c_j (2 sigma^2)^{s/2} Gamma(offset_j + s/2)."""
    ser = _as_series(params, series)
    j = np.arange(ser.n_t + 1)
    return ser.log_w - _sp.gammaln(j + 1), j + 1.0


def specular_amplitudes(params: FtrParams) -> tuple[float, float]:
    a = math.sqrt(2.0 * params.sigma_sq * params.k_ratio * (1.0 + params.delta))
    b = math.sqrt(2.0 * params.sigma_sq * params.k_ratio * (1.0 - params.delta))
    return 0.5 * (a + b), 0.5 * (a - b)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_envelope(params: FtrParams, seed, n: int) -> np.ndarray:
    """i.i.d. FTR envelopes from the two-wave-plus-diffuse construction."""
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = _rng(seed)
    v1, v2 = specular_amplitudes(params)
    zeta = rng.gamma(params.m, 1.0 / params.m, size=n)
    ph = rng.uniform(0.0, 2.0 * np.pi, size=(2, n))
    sd = math.sqrt(params.sigma_sq)
    re = np.sqrt(zeta) * (v1 * np.cos(ph[0]) + v2 * np.cos(ph[1])) + sd * rng.standard_normal(n)
    im = np.sqrt(zeta) * (v1 * np.sin(ph[0]) + v2 * np.sin(ph[1])) + sd * rng.standard_normal(n)
    return np.hypot(re, im)
