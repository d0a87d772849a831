"""Monte-Carlo oracle for the end-to-end SNDR.

Each chunk of draws owns an independent generator seeded from SeedSequence(seed,
spawn_key=(chunk,)), so results do not depend on how chunks are scheduled across
threads. Per draw: L envelope pairs from the FTR sampler, one pointing-error draw
(the same beam feeds every element), combined into h_F and then the SNDR.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError
from .ftr import sample_envelope
from .perf_metrics import SystemModel, sndr
from .thz_channel import misalign_sample

CHUNK = 1_000_000
Z95 = 1.959963984540054


@dataclass(frozen=True)
class McRun:
    model: SystemModel
    n_samples: int = 1_000_000
    seed: int = 0
    phase_mode: str = "aligned"
    phases: tuple | None = None
    threads: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")
        if self.phase_mode not in ("aligned", "given"):
            raise DomainError("phase_mode must be 'aligned' or 'given'")
        if self.phase_mode == "given":
            if self.phases is None or len(self.phases) != self.model.l_elements:
                raise DomainError("given-phase mode needs one phase per element")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")


@dataclass(frozen=True)
class McEstimate:
    value: float
    lo: float
    hi: float
    n: int


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _chunks(n: int):
    return [(c, min(CHUNK, n - c * CHUNK)) for c in range(math.ceil(n / CHUNK))]


def _draw_chunk(run: McRun, chunk: int, n: int):
    rng = chunk_rng(run.seed, chunk)
    mod = run.model
    if run.phase_mode == "aligned":
        h_f = np.zeros(n)
        for p1, p2 in zip(mod.hop1, mod.hop2):
            h_f += sample_envelope(p1, rng, n) * sample_envelope(p2, rng, n)
    else:
        # FTR is circularly symmetric, so the channel phase is uniform and independent of |g|
        acc = np.zeros(n, dtype=complex)
        for p1, p2, phi in zip(mod.hop1, mod.hop2, run.phases):
            amp = sample_envelope(p1, rng, n) * sample_envelope(p2, rng, n)
            th = rng.uniform(0.0, 2.0 * np.pi, size=(2, n)).sum(axis=0)
            acc += amp * np.exp(1j * (th + phi))
        h_f = np.abs(acc)
    h_p = misalign_sample(mod.mis, rng, n)
    return h_f, h_p


def _draw(run: McRun):
    jobs = _chunks(run.n_samples)
    if run.threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(run.threads) as ex:
            parts = list(ex.map(lambda cn: _draw_chunk(run, *cn), jobs))
    else:
        parts = [_draw_chunk(run, c, n) for c, n in jobs]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def sample_hf(run: McRun) -> np.ndarray:
    return _draw(run)[0]


def sample_hfp(run: McRun) -> np.ndarray:
    h_f, h_p = _draw(run)
    return h_f * h_p


def sample_sndr(run: McRun) -> np.ndarray:
    h_f, h_p = _draw(run)
    return sndr(h_f, h_p, run.model)


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n < 1:
        raise DomainError("n must be >= 1")
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def op_from_samples(samples: np.ndarray, gamma_th: float) -> McEstimate:
    n = samples.size
    k = int(np.count_nonzero(samples < gamma_th))
    lo, hi = wilson_interval(k, n)
    return McEstimate(k / n, lo, hi, n)


def estimate_op(run: McRun, gamma_th: float, samples: np.ndarray | None = None) -> McEstimate:
    """P(SNDR < gamma_th) with a Wilson 95 % interval."""
    if gamma_th < 0:
        raise DomainError("threshold must be >= 0")
    return op_from_samples(sample_sndr(run) if samples is None else samples, gamma_th)


def capacity_from_samples(samples: np.ndarray) -> McEstimate:
    c = np.log2(1.0 + np.asarray(samples, float))
    mean = float(c.mean())
    half = Z95 * float(c.std(ddof=1)) / math.sqrt(c.size) if c.size > 1 else 0.0
    return McEstimate(mean, mean - half, mean + half, c.size)


def estimate_capacity(run: McRun, samples: np.ndarray | None = None) -> McEstimate:
    """Mean of log2(1 + SNDR) with a normal 95 % interval."""
    return capacity_from_samples(sample_sndr(run) if samples is None else samples)


class EmpiricalCdf:
    """Right-continuous step CDF. ``samples`` is exposed for exact integration."""

    def __init__(self, samples):
        self.samples = np.sort(np.asarray(samples, dtype=float))
        if self.samples.size == 0:
            raise DomainError("empirical CDF needs at least one sample")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.samples, x, side="right") / self.samples.size
        return float(out) if out.ndim == 0 else out

    def ks_distance(self, cdf) -> float:
        return float(stats.kstest(self.samples, cdf).statistic)


def empirical_cdf(run: McRun) -> EmpiricalCdf:
    return EmpiricalCdf(sample_sndr(run))


def empirical_hf(run: McRun) -> EmpiricalCdf:
    return EmpiricalCdf(sample_hf(run))


def cdf_grid_rows(run: McRun, xs) -> list[tuple[float, float]]:
    ecdf = empirical_cdf(run)
    return [(float(x), ecdf(x)) for x in xs]
