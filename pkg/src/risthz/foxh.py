"""Numerical Meijer G and multivariate Fox H functions on vertical Mellin-Barnes contours.

An integrand is a product of gamma factors Gamma(offset + coeffs . s) (numerator or
denominator), per-variable factors that depend on one s_i only, and powers z_i^{e_i s_i}.
Integration runs along s_i = c_i + i t_i with the rectangle rule

    (1/2 pi i)^n int f ds = (h / 2 pi)^n sum_k f(c + i h k).

Variables whose coefficients agree in every coupling factor only enter those factors
through their sum, so their one-dimensional arrays are convolved onto the lattice of
partial sums before the coupling factors are applied. For the outage and capacity
integrands this reduces an n-dimensional tensor grid to one or two dimensions.

Per-variable factors may be finite gamma series sum_j w_j Gamma(a_j + b s_i). Folding a
mixture index into the integrand this way costs O(N_T) per grid point instead of
multiplying the number of integrals by N_T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy.optimize import linprog

from .errors import (ContourConflictError, CostGuardError, DivergenceError, DomainError,
                     NonConvergenceError)
from .specfun import ln_gamma

MAX_DIM = 4
MAX_POINTS_PER_AXIS = 10_000
MAX_GRID = 30_000_000
TAIL_CUT = 1e-20


@dataclass(frozen=True)
class GammaFactor:
    """Gamma(offset + sum_i coeffs[i] s_i), in the numerator or the denominator."""

    offset: float
    coeffs: tuple
    numerator: bool = True

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))


@dataclass(frozen=True)
class GammaSeries:
    """Numerator factor sum_j exp(log_weights[j]) Gamma(offsets[j] + coeff s) of one variable.

    Every term has its poles on the same side, where offsets[j] + coeff s hits 0, -1, ...
    """

    log_weights: np.ndarray
    offsets: np.ndarray
    coeff: float

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        off = np.asarray(self.offsets, dtype=float)
        if lw.shape != off.shape or lw.ndim != 1 or lw.size == 0:
            raise DomainError("gamma series needs matching 1-D weights and offsets")
        if self.coeff == 0:
            raise DomainError("gamma series coefficient must be nonzero")
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "offsets", off)

    def log_value(self, s: np.ndarray) -> np.ndarray:
        lg = self.log_weights[:, None] + ln_gamma(self.offsets[:, None] + self.coeff * s[None, :])
        top = lg.real.max(axis=0)
        return top + np.log(np.exp(lg - top).sum(axis=0))


InnerFactor = Union[GammaFactor, GammaSeries]


@dataclass(frozen=True)
class QuadSettings:
    step: float = 0.1
    half_width: float = 40.0
    rel_tol: float = 1e-3
    abs_tol: float = 1e-13
    max_refine: int = 4

    def __post_init__(self):
        if not (self.step > 0 and self.half_width > 0):
            raise DomainError("step and half_width must be positive")
        if self.half_width / self.step > MAX_POINTS_PER_AXIS:
            raise CostGuardError(
                f"half_width/step = {self.half_width / self.step:g} exceeds {MAX_POINTS_PER_AXIS}")


@dataclass(frozen=True)
class FoxHSpec:
    """Integrand description. ``inner_factors[i]`` holds factors of variable i only (coeff on s_i)."""

    dim: int
    outer_factors: tuple
    inner_factors: tuple
    arg_exponents: tuple = ()
    contours: tuple | None = None
    quad: QuadSettings = field(default_factory=QuadSettings)

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("dim must be >= 1")
        if len(self.inner_factors) != self.dim:
            raise DomainError("need one inner factor list per variable")
        for f in self.outer_factors:
            if len(f.coeffs) != self.dim:
                raise DomainError("outer factor coefficient length must equal dim")
        for fs in self.inner_factors:
            for f in fs:
                if isinstance(f, GammaFactor) and len(f.coeffs) != 1:
                    raise DomainError("inner gamma factors take one coefficient")
        if not self.arg_exponents:
            object.__setattr__(self, "arg_exponents", (1.0,) * self.dim)
        if len(self.arg_exponents) != self.dim:
            raise DomainError("arg_exponents length must equal dim")
        if self.contours is not None and len(self.contours) != self.dim:
            raise DomainError("contours length must equal dim")


@dataclass(frozen=True)
class MeijerGSpec:
    m: int
    n: int
    p: int
    q: int
    a: tuple
    b: tuple

    def __post_init__(self):
        if len(self.a) != self.p or len(self.b) != self.q:
            raise DomainError("a and b lengths must equal p and q")
        if not (0 <= self.m <= self.q and 0 <= self.n <= self.p):
            raise DomainError("need 0 <= m <= q and 0 <= n <= p")


@dataclass
class FoxHResult:
    value: float
    imag: float
    step: float
    half_width: float
    evaluations: int
    contours: tuple


# ---------------------------------------------------------------- contours

def _pole_constraints(spec: FoxHSpec):
    """Rows (coeffs, offset) meaning offset + coeffs . c must stay > 0 (numerator poles)."""
    rows = []
    for f in spec.outer_factors:
        if f.numerator:
            rows.append((np.array(f.coeffs), float(np.real(f.offset))))
    for i, fs in enumerate(spec.inner_factors):
        for f in fs:
            co = np.zeros(spec.dim)
            if isinstance(f, GammaSeries):
                co[i] = f.coeff
                rows.append((co, float(f.offsets.min())))
            elif f.numerator:
                co[i] = f.coeffs[0]
                rows.append((co, float(np.real(f.offset))))
    return [(c, o) for c, o in rows if np.any(c != 0)]


def choose_contours(spec: FoxHSpec, cap: float = 1.0) -> tuple:
    """Abscissae maximising the smallest distance to any numerator pole family.

    In one dimension with poles on both sides this is the midpoint of the gap. The
    margin is capped at ``cap`` so one-sided pole sets still give a finite answer.
    """
    rows = _pole_constraints(spec)
    n = spec.dim
    if not rows:
        return tuple([0.0] * n)
    # variables: c_1..c_n, t ; maximise t s.t. -(coeffs . c) + |coeffs| t <= offset
    a_ub = np.array([np.concatenate([-c, [np.linalg.norm(c)]]) for c, _ in rows])
    b_ub = np.array([o for _, o in rows])
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    bounds = [(None, None)] * n + [(None, cap)]
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0 or res.x[-1] <= 1e-9:
        raise ContourConflictError("no vertical contour separates the left and right pole families")
    return tuple(float(v) for v in res.x[:n])


def _cancel(spec: FoxHSpec) -> FoxHSpec:
    """Drop numerator/denominator pairs of identical gamma factors."""
    def simplify(factors):
        num = [f for f in factors if isinstance(f, GammaFactor) and f.numerator]
        den = [f for f in factors if isinstance(f, GammaFactor) and not f.numerator]
        rest = [f for f in factors if not isinstance(f, GammaFactor)]
        keep_num = []
        for f in num:
            twin = next((g for g in den if g.offset == f.offset and g.coeffs == f.coeffs), None)
            if twin is None:
                keep_num.append(f)
            else:
                den.remove(twin)
        return keep_num + den + rest
    return replace(spec, outer_factors=tuple(simplify(list(spec.outer_factors))),
                   inner_factors=tuple(tuple(simplify(list(fs))) for fs in spec.inner_factors))


# ---------------------------------------------------------------- quadrature

def _blocks(spec: FoxHSpec) -> list[list[int]]:
    """Group variables whose coefficients agree in every outer factor."""
    if not spec.outer_factors:
        return [[i] for i in range(spec.dim)]
    cols = [tuple(f.coeffs[i] for f in spec.outer_factors) for i in range(spec.dim)]
    groups: dict[tuple, list[int]] = {}
    for i, key in enumerate(cols):
        groups.setdefault(key, []).append(i)
    return list(groups.values())


def _log_inner(spec: FoxHSpec, i: int, s: np.ndarray, log_z: float) -> np.ndarray:
    out = spec.arg_exponents[i] * s * log_z
    for f in spec.inner_factors[i]:
        if isinstance(f, GammaSeries):
            out = out + f.log_value(s)
        else:
            lg = ln_gamma(f.offset + f.coeffs[0] * s)
            out = out + lg if f.numerator else out - lg
    return out


def _rectangle(spec: FoxHSpec, log_args: np.ndarray, contours, h: float, w: float):
    """One rectangle-rule pass; returns (complex sum, abs sum) scaled to the integral."""
    npt = int(round(w / h))
    if npt > MAX_POINTS_PER_AXIS:
        raise CostGuardError(f"{2 * npt + 1} nodes per axis exceed the cost guard")
    t = h * np.arange(-npt, npt + 1)
    blocks = _blocks(spec)
    # one lattice per block: lattice offset (sum of abscissae) and convolved values
    block_vals, block_shift, block_scale = [], [], 0.0
    for blk in blocks:
        acc, shift = None, 0.0
        for i in blk:
            lg = _log_inner(spec, i, contours[i] + 1j * t, log_args[i])
            top = float(lg.real.max())
            block_scale += top
            g = np.exp(lg - top)
            acc = g if acc is None else np.convolve(acc, g)
            shift += contours[i]
        block_vals.append(acc)
        block_shift.append(shift)
    # drop lattice tails that cannot affect the sum
    axes = []
    for b, v in enumerate(block_vals):
        centre = (len(v) - 1) // 2
        live = np.nonzero(np.abs(v) > TAIL_CUT * np.abs(v).max())[0]
        lo, hi = int(live[0]), int(live[-1]) + 1
        block_vals[b] = v[lo:hi]
        axes.append(block_shift[b] + 1j * h * (np.arange(lo, hi) - centre))
    sizes = [len(v) for v in block_vals]
    if float(np.prod(sizes, dtype=float)) > MAX_GRID:
        raise CostGuardError(f"coupled grid of {np.prod(sizes, dtype=float):.3g} points exceeds the cost guard")
    grids = np.meshgrid(*axes, indexing="ij", sparse=True)
    log_outer = 0.0
    for f in spec.outer_factors:
        arg = f.offset
        for b, blk in enumerate(blocks):
            arg = arg + f.coeffs[blk[0]] * grids[b]
        lg = ln_gamma(np.asarray(arg + 0j))
        log_outer = log_outer + lg if f.numerator else log_outer - lg
    vals = block_vals[0].reshape([-1] + [1] * (len(blocks) - 1))
    for b in range(1, len(blocks)):
        shape = [1] * len(blocks)
        shape[b] = -1
        vals = vals * block_vals[b].reshape(shape)
    if np.ndim(log_outer) == 0:
        top = 0.0
        prod = vals * np.exp(log_outer)
    else:
        top = float(np.max(log_outer.real))
        prod = vals * np.exp(log_outer - top)
    scale = math.exp(block_scale + top) * (h / (2.0 * math.pi)) ** spec.dim
    return complex(prod.sum()) * scale, float(np.abs(prod).sum()) * scale


def eval_foxh(spec: FoxHSpec, args: Sequence[float], return_info: bool = False):
    """Value of the Mellin-Barnes integral with arguments z_i, refined until it settles."""
    if spec.dim > MAX_DIM:
        raise CostGuardError(f"dimension {spec.dim} exceeds the limit of {MAX_DIM}")
    args = np.asarray(args, dtype=float).ravel()
    if args.size != spec.dim or np.any(args <= 0):
        raise DomainError("need one positive argument per variable")
    spec = _cancel(spec)
    contours = spec.contours if spec.contours is not None else choose_contours(spec)
    log_args = np.log(args)
    q = spec.quad
    h, w = q.step, q.half_width
    evals = 1
    val, mag = _rectangle(spec, log_args, contours, h, w)

    def close(a, b):
        return abs(a.real - b.real) <= q.rel_tol * abs(b.real) + q.abs_tol

    window_fail = 0
    for _ in range(q.max_refine):
        fine, mag_f = _rectangle(spec, log_args, contours, h / 2, w)
        wide, mag_w = _rectangle(spec, log_args, contours, h / 2, 2 * w)
        evals += 2
        ok_step, ok_window = close(val, fine), close(fine, wide)
        window_fail = 0 if ok_window else window_fail + 1
        if window_fail >= 2:
            raise DivergenceError("widening the contour window keeps changing the value")
        h, w, val, mag = h / 2, 2 * w, wide, mag_w
        if ok_step and ok_window:
            break
    else:
        raise NonConvergenceError(
            f"rectangle rule not settled after {q.max_refine} refinements (value {val.real:.6g})")
    if abs(val.imag) > 1e-8 * max(abs(val.real), 1e-4 * mag) + 1e-12:
        raise NonConvergenceError(f"imaginary residue {val.imag:.3e} for value {val.real:.6e}")
    if return_info:
        return FoxHResult(val.real, val.imag, h, w, evals, tuple(contours))
    return val.real


def meijer_spec_to_foxh(spec: MeijerGSpec, quad: QuadSettings | None = None) -> FoxHSpec:
    fs = []
    for j, bj in enumerate(spec.b):
        if j < spec.m:
            fs.append(GammaFactor(bj, (-1.0,), True))
        else:
            fs.append(GammaFactor(1.0 - bj, (1.0,), False))
    for j, aj in enumerate(spec.a):
        if j < spec.n:
            fs.append(GammaFactor(1.0 - aj, (1.0,), True))
        else:
            fs.append(GammaFactor(aj, (-1.0,), False))
    return FoxHSpec(1, (), (tuple(fs),), quad=quad or QuadSettings())


def eval_meijer_g(spec: MeijerGSpec, x: float, quad: QuadSettings | None = None) -> float:
    """G^{m,n}_{p,q}(x | a; b) by quadrature of its Mellin-Barnes integral."""
    if not x > 0:
        raise DomainError("Meijer G argument must be positive")
    return eval_foxh(meijer_spec_to_foxh(spec, quad), [x])
