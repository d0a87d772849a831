"""Fast health checks behind ``risthz validate``. Each suite returns (label, passed, detail) rows."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats

from . import fitkit, foxh, ris_sio, thz_channel
from .ftr import FtrParams, cdf_envelope, compute_series, pdf_power, sample_envelope

MEASURED_SETS = ((2.9, 0.63, 0.3, 4.84e-3), (7.0, 6.0, 0.2, 2.7729), (6.0, 3.0, 0.04, 2.382))


def _ftr():
    rows = []
    for k, m, d, sig in MEASURED_SETS:
        p = FtrParams.from_sigma(k, m, d, sig)
        ser = compute_series(p)
        mp = p.mean_power
        tot = integrate.quad(lambda g: pdf_power(g, p, ser), 0, 60 * mp, limit=400, points=[mp])[0]
        mean = integrate.quad(lambda g: g * pdf_power(g, p, ser), 0, 60 * mp, limit=400,
                              points=[mp])[0]
        rel = abs(mean - mp) / mp
        ks = stats.kstest(sample_envelope(p, 1, 100_000), lambda r: cdf_envelope(r, p, ser)).statistic
        rows.append((f"K={k} m={m} D={d}", abs(tot - 1) < 1e-5 and rel < 1e-4 and ks < 0.01,
                     f"|int-1|={abs(tot - 1):.1e} mean_rel={rel:.1e} ks={ks:.4f}"))
    return rows


def _channel():
    dry = thz_channel.Environment(rel_humidity=0.0)
    f = np.linspace(275e9, 400e9, 126)
    poly = ((thz_channel._P1 * f + thz_channel._P2) * f + thz_channel._P3) * f + thz_channel._P4
    err = float(np.max(np.abs(thz_channel.absorption_coefficient(f, dry) - poly)))
    env = thz_channel.Environment()
    k3, k34, k38 = thz_channel.absorption_coefficient(np.array([300e9, 340e9, 380e9]), env)
    return [("dry air is the cubic background", err < 1e-12, f"max err {err:.1e}"),
            ("380 > 340 > 300 GHz", bool(k38 > k34 > k3), f"{k3:.4g} {k34:.4g} {k38:.4g}")]


def _foxh():
    rows = []
    for x in (0.3, 1.0, 4.0):
        e = foxh.eval_meijer_g(foxh.MeijerGSpec(1, 0, 0, 1, (), (0.0,)), x)
        r = foxh.eval_meijer_g(foxh.MeijerGSpec(1, 1, 1, 1, (1.0,), (1.0,)), x)
        ok = abs(e - math.exp(-x)) < 1e-6 and abs(r - x / (1 + x)) < 1e-6
        rows.append((f"Meijer reductions at x={x}", ok, f"{e:.8f} {r:.8f}"))
    return rows


def _sio():
    mis = thz_channel.Misalignment.from_shape(0.01, 2.25)
    hop = FtrParams(5.0, 5.0, 0.6, 0.5)
    ris = ris_sio.RisConfig.from_levels(3, 4)
    hits = 0
    for seed in range(10):
        env = ris_sio.make_environment(hop, hop, 3, mis, seed=seed)
        _, best = ris_sio.brute_force(env, ris)
        res = ris_sio.sio_optimize(env, ris, ris_sio.SwarmConfig(max_iter=60, seed=seed))
        hits += res.best_fitness >= best * (1 - 1e-12)
    return [("L=3 K=4 reaches brute-force optimum", hits == 10, f"{hits}/10 seeds")]


def _fit():
    d = fitkit.ks_statistic(np.array([0.1, 0.5, 0.9]), lambda x: np.clip(x, 0, 1))
    return [("hand K-S example", abs(d - 7 / 30) < 1e-12, f"D={d:.6f}")]


SUITES = {"ftr": _ftr, "channel": _channel, "foxh": _foxh, "sio": _sio, "fit": _fit}
