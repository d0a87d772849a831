"""RIS phase-shift search: the shrinking three-attractor swarm (SIO), a PSO baseline and oracles.

Phases live on the lattice {0, dtheta, ..., (K-1) dtheta}. Internally positions are kept
in lattice units (integers modulo K), so every reported phase is an exact lattice point.
With dtheta = 0 the search is continuous and positions are angles modulo 2 pi.

Attractor differences p - x are taken on the circle (shortest signed arc), because phase
0 and phase 2 pi - dtheta are neighbours. The local best of a particle is the best
personal best among itself and its two ring neighbours in the current swarm order.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CostGuardError, DomainError
from .ftr import FtrParams, sample_envelope
from .thz_channel import Misalignment, misalign_moment

TWO_PI = 2.0 * math.pi
BRUTE_FORCE_MAX = 1_000_000


@dataclass(frozen=True)
class RisConfig:
    l_elements: int
    delta_theta: float = math.pi / 10
    beta: float = 1.0

    def __post_init__(self):
        if self.l_elements < 1:
            raise DomainError("L must be >= 1")
        if not 0.0 <= self.delta_theta < TWO_PI:
            raise DomainError("delta_theta must lie in [0, 2 pi)")
        if self.delta_theta > 0 and self.levels < 2:
            raise DomainError("a discrete lattice needs at least 2 levels")

    @classmethod
    def from_levels(cls, l_elements: int, levels: int, beta: float = 1.0):
        return cls(l_elements, TWO_PI / levels, beta)

    @property
    def discrete(self) -> bool:
        return self.delta_theta > 0

    @property
    def levels(self) -> int:
        """K = ceil(2 pi / dtheta), guarded against round-off for exact divisors."""
        if not self.discrete:
            return 0
        r = TWO_PI / self.delta_theta
        return int(round(r)) if abs(r - round(r)) < 1e-9 else math.ceil(r)

    @property
    def period(self) -> float:
        """Circle length in internal units."""
        return float(self.levels) if self.discrete else TWO_PI

    @property
    def unit(self) -> float:
        return self.delta_theta if self.discrete else 1.0


@dataclass(frozen=True)
class SwarmConfig:
    n_begin: int = 30
    n_end: int = 10
    omega_begin: float = 0.9
    omega_end: float = 0.4
    c1: float = 1.0
    c2: float = 2.0
    c3: float = 2.0
    v_max: float = math.pi / 4
    max_iter: int = 200
    seed: int = 0
    local_best: str = "ring"

    def __post_init__(self):
        if self.local_best not in ("ring", "iteration"):
            raise DomainError("local_best must be 'ring' or 'iteration'")
        if not self.n_begin >= self.n_end >= 1:
            raise DomainError("need n_begin >= n_end >= 1")
        if not self.omega_begin >= self.omega_end > 0:
            raise DomainError("need omega_begin >= omega_end > 0")
        if not self.v_max > 0:
            raise DomainError("v_max must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")

    def omega(self, k: int) -> float:
        return self.omega_begin - k / self.max_iter * (self.omega_begin - self.omega_end)

    def swarm_size(self, k: int) -> int:
        return self.n_begin - math.floor(k / self.max_iter * (self.n_begin - self.n_end))


@dataclass
class RisEnvironment:
    """One frozen channel realisation. Fitness is the measured mean received amplitude."""

    g1: np.ndarray
    g2: np.ndarray
    path_gain: float
    mis: Misalignment
    meas_noise_sigma: float = 0.0
    meas_avg_count: int = 1
    noise_seed: int = 0
    e_opt: float | None = None
    _noise_rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.g1 = np.asarray(self.g1, dtype=complex)
        self.g2 = np.asarray(self.g2, dtype=complex)
        if self.g1.shape != self.g2.shape or self.g1.ndim != 1:
            raise DomainError("g1 and g2 must be equal-length vectors")
        if self.meas_noise_sigma < 0 or self.meas_avg_count < 1:
            raise DomainError("noise sigma must be >= 0 and averaging count >= 1")
        self._noise_rng = np.random.default_rng(self.noise_seed)

    @property
    def l_elements(self) -> int:
        return self.g1.size

    @property
    def scale(self) -> float:
        return self.path_gain * misalign_moment(1.0, self.mis)

    @property
    def cascade(self) -> np.ndarray:
        return self.g1 * self.g2

    def reset_noise(self, seed: int) -> None:
        self._noise_rng = np.random.default_rng(seed)


def make_environment(hop1: FtrParams, hop2: FtrParams, l_elements: int, mis: Misalignment,
                     path_gain: float = 1.0, seed: int = 0, **kw) -> RisEnvironment:
    """Draw g1, g2 with FTR envelopes and uniform phases (FTR is circularly symmetric)."""
    rng = np.random.default_rng(seed)
    g = []
    for p in (hop1, hop2):
        amp = sample_envelope(p, rng, l_elements)
        g.append(amp * np.exp(1j * rng.uniform(0.0, TWO_PI, l_elements)))
    return RisEnvironment(g[0], g[1], path_gain, mis, **kw)


def true_fitness(env: RisEnvironment, phases) -> np.ndarray | float:
    """Noiseless E_re for one phase vector (shape (L,)) or a batch (shape (n, L))."""
    ph = np.asarray(phases, dtype=float)
    vals = env.scale * np.abs(np.exp(1j * ph) @ env.cascade)
    return float(vals) if vals.ndim == 0 else vals


def measure_fitness(env: RisEnvironment, phases) -> np.ndarray | float:
    """E_re with optional Gaussian measurement error averaged over meas_avg_count reads."""
    val = true_fitness(env, phases)
    if env.meas_noise_sigma == 0:
        return val
    shape = np.shape(val)
    noise = env._noise_rng.normal(0.0, env.meas_noise_sigma, size=shape + (env.meas_avg_count,))
    out = val + noise.mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def continuous_bound(env: RisEnvironment) -> float:
    return env.scale * float(np.abs(env.cascade).sum())


def aligned_phases(env: RisEnvironment) -> np.ndarray:
    return np.mod(-np.angle(env.cascade), TWO_PI)


def brute_force(env: RisEnvironment, ris: RisConfig) -> tuple[np.ndarray, float]:
    if not ris.discrete:
        raise DomainError("brute force needs a discrete lattice")
    k, n = ris.levels, env.l_elements
    if k ** n > BRUTE_FORCE_MAX:
        raise CostGuardError(f"K^L = {k}^{n} exceeds {BRUTE_FORCE_MAX}")
    best_val, best_idx = -math.inf, None
    combos = np.array(list(itertools.product(range(k), repeat=n)))
    for start in range(0, len(combos), 65536):
        block = combos[start:start + 65536]
        vals = true_fitness(env, block * ris.delta_theta)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_idx = float(vals[i]), block[i]
    return best_idx * ris.delta_theta, best_val


def secular_roots(omega: float, t1: float, t2: float, t3: float):
    """Roots of x^2 - (1 - t1 - t2 - t3 + omega) x + omega = 0 and whether both lie in the unit disc."""
    b = 1.0 - t1 - t2 - t3 + omega
    r = np.roots([1.0, -b, omega]).astype(complex)
    if r.size == 1:  # omega = 0 with a vanishing linear coefficient
        r = np.array([r[0], 0.0 + 0.0j])
    elif r.size == 0:
        r = np.zeros(2, dtype=complex)
    stable = bool(np.all(np.abs(r) < 1.0))
    return (complex(r[0]), complex(r[1])), stable


@dataclass
class SwarmResult:
    best_phases: np.ndarray
    best_fitness: float
    trace: list = field(default_factory=list)
    max_rounding_residual: float = 0.0
    evaluations: int = 0

    def iterations_to(self, ratio: float) -> float:
        """First iteration whose true best-so-far reaches ``ratio`` of the bound (inf if never)."""
        for row in self.trace:
            if row["ratio_to_bound"] >= ratio:
                return row["iteration"]
        return math.inf

    @property
    def final_ratio(self) -> float:
        return self.trace[-1]["ratio_to_bound"] if self.trace else math.nan

    def write_csv(self, path) -> None:
        cols = ["iteration", "n_particles", "best_fitness", "ratio_to_bound", "omega"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            w.writerows(self.trace)


def _round_half_away(a: np.ndarray) -> np.ndarray:
    return np.sign(a) * np.floor(np.abs(a) + 0.5)


def _arc(p: np.ndarray, x: np.ndarray, period: float) -> np.ndarray:
    """Signed shortest difference p - x on a circle of length ``period``."""
    d = np.mod(p - x, period)
    return np.where(d > period / 2, d - period, d)


class _Swarm:
    def __init__(self, env: RisEnvironment, ris: RisConfig, cfg: SwarmConfig):
        if ris.l_elements != env.l_elements:
            raise DomainError("RisConfig and environment disagree on L")
        self.env, self.ris, self.cfg = env, ris, cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.period, self.unit = ris.period, ris.unit
        # in lattice mode the clip level is itself a lattice multiple (at least one step)
        self.vmax = max(1.0, math.floor(cfg.v_max / self.unit + 1e-9)) if ris.discrete else cfg.v_max
        n, dim = cfg.n_begin, env.l_elements
        if ris.discrete:
            self.x = self.rng.integers(0, ris.levels, size=(n, dim)).astype(float)
        else:
            self.x = self.rng.uniform(0.0, TWO_PI, size=(n, dim))
        self.v = self.rng.uniform(-self.vmax, self.vmax, size=(n, dim))
        self.bound = continuous_bound(env)
        self.evaluations = 0
        self.max_resid = 0.0
        fit = self.measure()
        self.pbest, self.pbest_fit = self.x.copy(), fit.copy()
        self.cur_fit = fit.copy()
        self.pe = np.zeros(n, dtype=int)
        g = int(np.argmax(fit))
        self.gbest, self.gbest_fit = self.x[g].copy(), float(fit[g])
        self.trace = []

    def phases(self, x):
        return x * self.unit

    def measure(self):
        self.evaluations += self.x.shape[0]
        return np.atleast_1d(measure_fitness(self.env, self.phases(self.x)))

    def observe(self, fit):
        self.cur_fit = fit
        better = fit > self.pbest_fit
        self.pbest[better] = self.x[better]
        self.pbest_fit[better] = fit[better]
        self.pe = np.where(better, 0, self.pe + 1)
        g = int(np.argmax(self.pbest_fit))
        if self.pbest_fit[g] > self.gbest_fit:
            self.gbest, self.gbest_fit = self.pbest[g].copy(), float(self.pbest_fit[g])

    def local_best(self):
        if self.cfg.local_best == "iteration":
            return self.x[int(np.argmax(self.cur_fit))][None, :].copy()
        n = self.x.shape[0]
        idx = np.arange(n)
        nb = np.stack([(idx - 1) % n, idx, (idx + 1) % n])
        pick = nb[np.argmax(self.pbest_fit[nb], axis=0), idx]
        return self.pbest[pick]

    def keep(self, mask):
        for name in ("x", "v", "pbest", "pbest_fit", "pe", "cur_fit"):
            setattr(self, name, getattr(self, name)[mask])

    def prune(self, target: int):
        d = self.x.shape[0] - target
        if d <= 0:
            return
        n = self.x.shape[0]
        # largest Pe first, then worst personal best, then lowest index
        order = np.lexsort((np.arange(n), self.pbest_fit, -self.pe))
        mask = np.ones(n, dtype=bool)
        mask[order[:d]] = False
        self.keep(mask)

    def move(self, omega, attractors):
        raw = omega * self.v
        for c, p in attractors:
            r = self.rng.random(self.x.shape)
            raw = raw + c * r * _arc(p, self.x, self.period)
        if self.ris.discrete:
            v = _round_half_away(raw)
            self.max_resid = max(self.max_resid, float(np.max(np.abs(v - raw))) * self.unit)
        else:
            v = raw
        self.v = np.clip(v, -self.vmax, self.vmax)
        self.x = np.mod(self.x + self.v, self.period)

    def record(self, k, omega):
        row = {"iteration": k, "n_particles": int(self.x.shape[0]),
               "best_fitness": self.gbest_fit,
               "ratio_to_bound": true_fitness(self.env, self.phases(self.gbest)) / self.bound,
               "omega": omega}
        if self.env.e_opt:
            row["ratio_to_e_opt"] = true_fitness(self.env, self.phases(self.gbest)) / self.env.e_opt
        self.trace.append(row)

    def result(self):
        return SwarmResult(self.phases(self.gbest), self.gbest_fit, self.trace,
                           self.max_resid, self.evaluations)


def sio_optimize(env: RisEnvironment, ris: RisConfig, cfg: SwarmConfig) -> SwarmResult:
    """Shrinking swarm with personal, global and local attractors and lattice-rounded velocity."""
    sw = _Swarm(env, ris, cfg)
    sw.record(0, cfg.omega(0))
    for k in range(cfg.max_iter):
        sw.prune(cfg.swarm_size(k))
        sw.move(cfg.omega(k), ((cfg.c1, sw.pbest), (cfg.c2, sw.gbest[None, :]),
                               (cfg.c3, sw.local_best())))
        sw.observe(sw.measure())
        sw.record(k + 1, cfg.omega(k + 1))
    return sw.result()


def pso_optimize(env: RisEnvironment, ris: RisConfig, cfg: SwarmConfig) -> SwarmResult:
    """Fixed-size two-attractor PSO with the same inertia schedule and lattice rounding."""
    sw = _Swarm(env, ris, cfg)
    sw.record(0, cfg.omega(0))
    for k in range(cfg.max_iter):
        sw.move(cfg.omega(k), ((cfg.c1, sw.pbest), (cfg.c2, sw.gbest[None, :])))
        sw.observe(sw.measure())
        sw.record(k + 1, cfg.omega(k + 1))
    return sw.result()
