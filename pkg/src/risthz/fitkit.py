"""Amplitude-distribution fitting judged by the Kolmogorov-Smirnov distance.

Gaussian, Nakagami-m, Rician and alpha-mu fits start from the method of moments and take
one bounded Nelder-Mead refinement of the K-S distance. FTR fits search a coarse grid over
(K, m, Delta), with sigma^2 fixed by the mean-power identity E[R^2] = 2 sigma^2 (1 + K),
then refine by a compass pattern search. The FTR series is evaluated by phase averaging,
which is fast enough for a few hundred candidate parameter sets.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special, stats

from .errors import DomainError, NonConvergenceError, OverflowRangeError
from .ftr import FtrParams, cdf_envelope, compute_series

FAMILIES = ("ftr", "nakagami", "rician", "gaussian", "alpha-mu")
FTR_GRID = {
    "k_ratio": (0.0, 1.0, 3.0, 7.0, 15.0, 30.0),
    "m": (0.5, 1.0, 2.0, 4.0, 8.0, 15.0, 30.0),
    "delta": (0.0, 0.25, 0.5, 0.75, 0.95),
}
FTR_BOUNDS = ((0.0, 30.0), (0.5, 30.0), (0.0, 1.0))
GRID_THIN = 2000


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise DomainError("sample set is empty")
        if not np.all(np.isfinite(v)):
            raise DomainError("samples must be finite")
        if np.any(v < 0):
            raise DomainError("amplitudes must be >= 0")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def moment(self, k: float) -> float:
        return float(np.mean(self.values ** k))


@dataclass
class FitResult:
    family: str
    params: dict
    ks_stat: float
    pass_5pct: bool
    evaluations: int = 0
    cdf: Callable | None = field(default=None, repr=False)


def critical_value(n: int) -> float:
    """5 % K-S critical value: 1.36/sqrt(n) for n > 35, the exact quantile below."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return 1.36 / math.sqrt(n) if n > 35 else float(stats.kstwo.ppf(0.95, n))


def ks_statistic(samples, cdf: Callable) -> float:
    """D = max_i max(i/n - F(x_(i)), F(x_(i)) - (i-1)/n) over the sorted sample."""
    x = np.sort(samples.values if isinstance(samples, SampleSet) else np.asarray(samples, float))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def _check_spread(s: SampleSet):
    if np.ptp(s.values) == 0:
        raise DomainError("degenerate sample: all values are equal")


# ---------------------------------------------------------------- families

def family_cdf(family: str, params: dict) -> Callable:
    if family == "gaussian":
        return stats.norm(params["mu"], params["sigma"]).cdf
    if family == "nakagami":
        return stats.nakagami(params["m"], scale=math.sqrt(params["omega"])).cdf
    if family == "rician":
        return stats.rice(params["nu"] / params["sigma"], scale=params["sigma"]).cdf
    if family == "alpha-mu":
        a, mu, rh = params["alpha"], params["mu"], params["r_hat"]
        return stats.gengamma(mu, a, scale=rh * mu ** (-1.0 / a)).cdf
    if family == "ftr":
        p = FtrParams(params["k_ratio"], params["m"], params["delta"], params["sigma_sq"])
        ser = compute_series(p, method="phase-average")
        return lambda r: cdf_envelope(r, p, ser)
    raise DomainError(f"unknown family {family!r}")


def _mom(family: str, s: SampleSet) -> dict:
    m1, m2, m4 = s.moment(1), s.moment(2), s.moment(4)
    if family == "gaussian":
        return {"mu": m1, "sigma": float(np.std(s.values, ddof=1))}
    if family == "nakagami":
        return {"m": max(0.5, m2 * m2 / (m4 - m2 * m2)), "omega": m2}
    if family == "rician":
        af = (m4 - m2 * m2) / (m2 * m2)
        k = (1.0 + math.sqrt(1.0 - af)) / af - 1.0 if 0 < af < 1 else 0.0
        return {"nu": math.sqrt(k * m2 / (1 + k)), "sigma": math.sqrt(m2 / (2 * (1 + k)))}
    if family == "alpha-mu":
        return _alpha_mu_moments(s)
    raise DomainError(f"no moment fit for {family!r}")


def _alpha_mu_moments(s: SampleSet) -> dict:
    """Match E[R], E[R^3], E[R^4] given E[R^2], with r_hat eliminated through E[R^2]."""
    m2 = s.moment(2)
    target = np.log([s.moment(k) / m2 ** (k / 2) for k in (1, 3, 4)])

    def ratios(theta):
        a, mu = np.exp(theta)
        lg = special.gammaln
        out = []
        for k in (1, 3, 4):
            out.append(lg(mu + k / a) - lg(mu) - k / 2 * (lg(mu + 2 / a) - lg(mu)))
        return np.array(out) - target

    sol = optimize.least_squares(ratios, x0=np.log([2.0, 1.0]), bounds=(np.log([0.2, 0.05]),
                                 np.log([40.0, 40.0])))
    a, mu = np.exp(sol.x)
    r_hat = math.sqrt(m2 * math.exp(math.lgamma(mu) - math.lgamma(mu + 2 / a)) * mu ** (2 / a))
    return {"alpha": float(a), "mu": float(mu), "r_hat": float(r_hat)}


_KEYS = {
    "gaussian": ("mu", "sigma"),
    "nakagami": ("m", "omega"),
    "rician": ("nu", "sigma"),
    "alpha-mu": ("alpha", "mu", "r_hat"),
}
_POSITIVE = {"sigma", "m", "omega", "alpha", "mu", "r_hat"}


def _refine(family: str, s: SampleSet, start: dict, maxiter: int = 200) -> tuple[dict, float, int]:
    keys = _KEYS[family]
    # optimise logs of positive parameters and the raw value of the rest
    def unpack(z):
        return {k: float(math.exp(v) if k in _POSITIVE else abs(v)) for k, v in zip(keys, z)}

    def pack(d):
        return np.array([math.log(d[k]) if k in _POSITIVE else d[k] for k in keys])

    def obj(z):
        try:
            p = unpack(z)
            if family == "nakagami" and p["m"] < 0.5:
                return 1.0
            return ks_statistic(s, family_cdf(family, p))
        except (ValueError, OverflowError, FloatingPointError):
            return 1.0

    z0 = pack(start)
    d0 = obj(z0)
    res = optimize.minimize(obj, z0, method="Nelder-Mead",
                            options={"maxiter": maxiter, "xatol": 1e-4, "fatol": 1e-6})
    if res.fun < d0:
        return unpack(res.x), float(res.fun), int(res.nfev) + 1
    return start, d0, int(res.nfev) + 1


class _FtrObjective:
    def __init__(self, s: SampleSet, thin: int | None):
        self.m2 = s.moment(2)
        x = np.sort(s.values)
        self.full = x
        if thin and x.size > thin:
            idx = np.linspace(0, x.size - 1, thin).round().astype(int)
            self.x, self.ranks, self.n = x[idx], idx + 1, x.size
        else:
            self.x, self.ranks, self.n = x, np.arange(1, x.size + 1), x.size
        self.calls = 0
        self.memo: dict = {}

    def params(self, k, m, d) -> dict:
        return {"k_ratio": k, "m": m, "delta": d, "sigma_sq": self.m2 / (2.0 * (1.0 + k))}

    def __call__(self, k, m, d) -> float:
        key = (round(k, 10), round(m, 10), round(d, 10))
        if key in self.memo:
            return self.memo[key]
        self.calls += 1
        try:
            f = family_cdf("ftr", self.params(k, m, d))(self.x)
        except (NonConvergenceError, OverflowRangeError, DomainError):
            val = 1.0
        else:
            val = float(max(np.max(self.ranks / self.n - f), np.max(f - (self.ranks - 1) / self.n)))
        self.memo[key] = val
        return val


def _pattern_search(obj: _FtrObjective, start, steps, max_evals: int = 150, min_step=1e-3):
    x = np.array(start, dtype=float)
    step = np.array(steps, dtype=float)
    lo = np.array([b[0] for b in FTR_BOUNDS])
    hi = np.array([b[1] for b in FTR_BOUNDS])
    best = obj(*x)
    evals = 0
    while evals < max_evals and np.any(step > min_step * np.maximum(1.0, np.abs(x))):
        improved = False
        for i in range(3):
            for sign in (1.0, -1.0):
                cand = x.copy()
                cand[i] = np.clip(cand[i] + sign * step[i], lo[i], hi[i])
                if cand[i] == x[i]:
                    continue
                val = obj(*cand)
                evals += 1
                if val < best:
                    x, best, improved = cand, val, True
                    break
        if not improved:
            step /= 2.0
    return x, best


def fit_ftr(s: SampleSet) -> FitResult:
    _check_spread(s)
    coarse = _FtrObjective(s, GRID_THIN)
    best, arg = math.inf, None
    for k, m, d in itertools.product(FTR_GRID["k_ratio"], FTR_GRID["m"], FTR_GRID["delta"]):
        val = coarse(k, m, d)
        if val < best:  # strict: ties keep the lexicographically first cell
            best, arg = val, (k, m, d)
    x, _ = _pattern_search(coarse, arg, (2.0, 1.0, 0.12))
    fine = _FtrObjective(s, None)
    x, _ = _pattern_search(fine, x, (0.5, 0.25, 0.03), max_evals=40)
    params = fine.params(*map(float, x))
    cdf = family_cdf("ftr", params)
    d = ks_statistic(s, cdf)
    return FitResult("ftr", params, d, d < critical_value(s.n), coarse.calls + fine.calls, cdf)


def fit_family(samples: SampleSet, family: str) -> FitResult:
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}; choose from {FAMILIES}")
    _check_spread(samples)
    if family == "ftr":
        return fit_ftr(samples)
    start = _mom(family, samples)
    params, d, evals = _refine(family, samples, start)
    return FitResult(family, params, d, d < critical_value(samples.n), evals,
                     family_cdf(family, params))


def fit_all(samples: SampleSet, families=FAMILIES) -> list[FitResult]:
    return [fit_family(samples, f) for f in families]


def load_csv(path, label: str | None = None) -> SampleSet:
    """One amplitude per line; '#' lines are skipped and a non-numeric first data line is a header."""
    vals = []
    seen = False
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            first, seen = not seen, True
            try:
                vals.append(float(row[0]))
            except ValueError:
                if first:
                    continue
                raise DomainError(f"line {i + 1}: not a number: {row[0]!r}") from None
    return SampleSet(np.array(vals), label or str(path))


def write_report(results: list[FitResult], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# risthz fit-report v1\n")
        w = csv.writer(fh)
        w.writerow(["family", "params", "ks_stat", "pass_5pct"])
        for r in results:
            ps = ";".join(f"{k}={v:.6g}" for k, v in r.params.items())
            w.writerow([r.family, ps, f"{r.ks_stat:.6f}", int(r.pass_5pct)])
