"""Special-function kernel: complex log-gamma, Legendre P on [1, inf), erf, incomplete gamma.

The log-gamma routine is a vectorised Lanczos approximation (g=7, 9 terms) with a
reflection step for Re(z) < 1/2. The logarithm of sin(pi z) inside the reflection is
evaluated in an overflow-free form, so the integrands of Mellin-Barnes contours far up
the imaginary axis stay finite.

Legendre functions of the first kind for x >= 1 are summed from a Gauss
hypergeometric series. The textbook form with argument (1-x)/2 diverges once x > 3,
so the series is taken after a Pfaff transformation, whose argument (x-1)/(x+1)
stays in [0, 1) for all x >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special as _sp

from .errors import DomainError, NonConvergenceError, PoleError

ArrayLike = Union[float, complex, np.ndarray]


@dataclass(frozen=True)
class Precision:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_terms: int = 500

    def __post_init__(self):
        if not self.rel_tol > 0 or not self.abs_tol > 0:
            raise DomainError("tolerances must be positive")
        if self.max_terms < 1:
            raise DomainError("max_terms must be >= 1")


DEFAULT_PRECISION = Precision()

_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)


def _lanczos_right(z: np.ndarray) -> np.ndarray:
    # valid for Re(z) >= 1/2
    zm1 = z - 1.0
    acc = np.full(z.shape, _LANCZOS_COEF[0], dtype=complex)
    for k in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[k] / (zm1 + k)
    t = zm1 + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (zm1 + 0.5) * np.log(t) - t + np.log(acc)


def _log_sin_pi(z: np.ndarray) -> np.ndarray:
    """log(sin(pi z)) modulo 2*pi*i, without overflow for large |Im z|."""
    # upper half plane: sin(pi w) = e^{-i pi w} (e^{2 i pi w} - 1) / (2i), |e^{2 i pi w}| <= 1;
    # the lower half plane follows by conjugate symmetry
    flip = z.imag < 0
    w = np.where(flip, np.conj(z), z)
    val = -1j * np.pi * w + np.log(np.exp(2j * np.pi * w) - 1.0) - np.log(2j)
    return np.where(flip, np.conj(val), val)


def ln_gamma(z: ArrayLike) -> ArrayLike:
    """Complex log-gamma. exp(ln_gamma(z)) equals Gamma(z); raises PoleError at 0, -1, -2, ..."""
    scalar = np.ndim(z) == 0
    zz = np.atleast_1d(np.asarray(z, dtype=complex))
    bad = (zz.imag == 0) & (zz.real <= 0) & (zz.real == np.round(zz.real))
    if bad.any():
        raise PoleError(f"Gamma has a pole at {zz[bad][0].real:g}")
    out = np.empty(zz.shape, dtype=complex)
    right = zz.real >= 0.5
    if right.any():
        out[right] = _lanczos_right(zz[right])
    left = ~right
    if left.any():
        zl = zz[left]
        out[left] = _LOG_PI - _log_sin_pi(zl) - _lanczos_right(1.0 - zl)
    return complex(out[0]) if scalar else out


def _log_pochhammer(a: float, n: int) -> tuple[float, int]:
    """(log|(a)_n|, sign) with sign 0 when the product vanishes."""
    logv, sign = 0.0, 1
    for i in range(n):
        f = a + i
        if f == 0.0:
            return -math.inf, 0
        logv += math.log(abs(f))
        if f < 0:
            sign = -sign
    return logv, sign


def hyp2f1_series(a, b, c, y: float, prec: Precision = DEFAULT_PRECISION) -> np.ndarray:
    """Gauss 2F1(a, b; c; y) by direct summation, vectorised over a, b, c for scalar 0 <= y < 1.

    c must avoid non-positive integers. Convergence is only declared past the index
    where every Pochhammer factor has changed sign, so a transiently tiny term cannot
    stop the sum early.
    """
    a, b, c = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(c, float))
    if np.any((c <= 0) & (c == np.round(c))):
        raise PoleError("2F1 lower parameter is a non-positive integer")
    if not 0.0 <= y < 1.0:
        raise DomainError("series argument must lie in [0, 1)")
    total = np.ones(a.shape)
    term = np.ones(a.shape)
    if y == 0.0:
        return total
    settle = np.maximum(np.maximum(-a, -b), 0.0) + 1.0
    active = np.ones(a.shape, dtype=bool)
    for k in range(prec.max_terms):
        term = np.where(active, term * (a + k) * (b + k) / ((c + k) * (k + 1.0)) * y, 0.0)
        total = total + term
        done = (np.abs(term) <= prec.rel_tol * np.abs(total) + prec.abs_tol) & (k + 1 >= settle)
        active &= ~done
        if not active.any():
            return total
    raise NonConvergenceError(f"2F1 series did not converge in {prec.max_terms} terms")


def legendre_p_log(nu: float, mus, x: float, prec: Precision = DEFAULT_PRECISION):
    """log|P_nu^mu(x)| and its sign for integer orders ``mus`` (vectorised), x >= 1.

    Uses P_nu^mu(x) = y^{-mu/2} ((1+x)/2)^nu 2F1(-nu, -nu-mu; 1-mu; y) / Gamma(1-mu),
    y = (x-1)/(x+1). For mu >= 1 the ratio 2F1/Gamma(1-mu) is replaced by its limit
    (-nu)_mu (-nu-mu)_mu / mu! y^mu 2F1(mu-nu, -nu; mu+1; y).
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=int))
    if not x >= 1.0:
        raise DomainError(f"Legendre argument must be >= 1, got {x}")
    logv = np.full(mus.shape, -np.inf)
    sign = np.zeros(mus.shape, dtype=int)
    if x == 1.0:
        logv[mus == 0] = 0.0
        sign[mus == 0] = 1
        return logv, sign
    y = (x - 1.0) / (x + 1.0)
    log_y = math.log(y)
    base = nu * math.log((1.0 + x) / 2.0)

    neg = mus <= 0
    if neg.any():
        mn = mus[neg].astype(float)
        f = hyp2f1_series(-nu, -nu - mn, 1.0 - mn, y, prec)
        pref = base - 0.5 * mn * log_y - _sp.gammaln(1.0 - mn)
        with np.errstate(divide="ignore"):
            logv[neg] = pref + np.log(np.abs(f))
        sign[neg] = np.sign(f).astype(int)

    pos = ~neg
    if pos.any():
        mp = mus[pos]
        f = hyp2f1_series(mp - nu, -nu, mp + 1.0, y, prec)
        lp = np.empty(mp.shape)
        sp = np.empty(mp.shape, dtype=int)
        for i, mu in enumerate(mp):
            l1, s1 = _log_pochhammer(-nu, int(mu))
            l2, s2 = _log_pochhammer(-nu - mu, int(mu))
            lp[i] = l1 + l2 - math.lgamma(mu + 1.0)
            sp[i] = s1 * s2
        with np.errstate(divide="ignore"):
            logv[pos] = base + 0.5 * mp * log_y + lp + np.log(np.abs(f))
        sign[pos] = sp * np.sign(f).astype(int)
    sign[~np.isfinite(logv)] = 0
    return logv, sign


def legendre_p(nu: float, mu: int, x: float, prec: Precision = DEFAULT_PRECISION) -> float:
    """Legendre function of the first kind P_nu^mu(x) for real degree, integer order, x >= 1."""
    if int(mu) != mu:
        raise DomainError("order must be an integer")
    logv, sign = legendre_p_log(float(nu), [int(mu)], float(x), prec)
    if sign[0] == 0:
        return 0.0
    return float(sign[0] * math.exp(logv[0]))


# Thin wrappers over scipy's Cephes implementations.

def erf(x):
    return _sp.erf(x)


def erfc(x):
    return _sp.erfc(x)


def gamma_regularized_lower(a, x):
    """P(a, x) = gamma(a, x) / Gamma(a)."""
    if np.any(np.asarray(a) <= 0):
        raise DomainError("shape parameter a must be positive")
    if np.any(np.asarray(x) < 0):
        raise DomainError("x must be nonnegative")
    return _sp.gammainc(a, x)
