"""Command-line entry point: ``risthz <command> [--config run.json] [--out DIR] ...``.

Exit codes: 0 success, 1 a validation suite failed, 2 configuration or input error.
Every CSV starts with a ``# risthz <kind> v1`` line followed by a header row.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import click
import numpy as np

from . import fitkit, montecarlo, perf_metrics, ris_sio, thz_channel
from .errors import ConfigError, RisThzError
from .ftr import FtrParams

log = logging.getLogger("risthz")
SCHEMA_VERSION = 1

DEFAULTS = {
    "environment": {"temperature_c": 27.0, "pressure_pa": 101325.0, "rel_humidity": 0.5},
    "geometry": {"freq_ghz": 300.0, "d1_m": 30.0, "d2_m": 20.0, "gt_dbi": 40.0, "gr_dbi": 40.0},
    "link": {"noise_dbw": 1.0, "h_l": None},
    "misalignment": {"detect_radius_m": 0.01, "beam_radius_m": 0.06, "jitter_sigma_m": 0.01,
                     "a_o": None, "gamma": None},
    "hops": {"l_elements": 2,
             "hop1": {"k": 5.0, "m": 5.0, "delta": 0.6, "mean_power_db": 20.0},
             "hop2": {"k": 6.0, "m": 7.0, "delta": 0.4, "mean_power_db": 20.0},
             "elements": None},
    "hardware": {"kappa_s": 0.1, "kappa_d": 0.1},
    "power_grid": {"start_dbw": 130.0, "stop_dbw": 170.0, "step_db": 10.0, "values_dbw": None},
    "outage": {"threshold_db": 0.5, "thresholds_db": None, "power_dbw": 150.0,
               "methods": ["exact", "high-sndr", "clt", "5fm", "mc"]},
    "capacity": {"l_values": None, "power_dbw": 150.0, "exact": True},
    "optimizer": {"algorithm": "sio", "l_elements": 50, "delta_theta_deg": 18.0,
                  "n_begin": 30, "n_end": 10, "omega_begin": 0.9, "omega_end": 0.4,
                  "c1": 1.0, "c2": 2.0, "c3": 2.0, "v_max_deg": 45.0, "max_iter": 300,
                  "meas_noise_sigma": 0.0, "meas_avg_count": 1, "compare_pso": False},
    "monte_carlo": {"n_samples": 1_000_000},
    "output": {"dir": "."},
}
HOP_KEYS = {"k", "m", "delta", "mean_power_db", "sigma"}


def _merge(base: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in user.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict) and key not in ("hop1", "hop2"):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be an object")
            out[key] = _merge(base[key], val, where + ".")
        elif key in ("hop1", "hop2"):
            out[key] = _hop_dict(val, where)
        else:
            out[key] = val
    return out


def _hop_dict(val, where) -> dict:
    if not isinstance(val, dict):
        raise ConfigError(f"'{where}' must be an object")
    bad = set(val) - HOP_KEYS
    if bad:
        raise ConfigError(f"unknown config key '{where}.{sorted(bad)[0]}'")
    if "sigma" in val and "mean_power_db" in val:
        raise ConfigError(f"'{where}' gives both sigma and mean_power_db")
    for need in ("k", "m", "delta"):
        if need not in val:
            raise ConfigError(f"'{where}.{need}' is required")
    return dict(val)


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls(copy.deepcopy(DEFAULTS))
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be an object")
        return cls(_merge(DEFAULTS, user))

    def section(self, name: str) -> dict:
        return self.data[name]

    def environment(self) -> thz_channel.Environment:
        return _guard("environment", lambda: thz_channel.Environment(**self.data["environment"]))

    def geometry(self) -> thz_channel.LinkGeometry:
        g = self.data["geometry"]
        return _guard("geometry", lambda: thz_channel.LinkGeometry(
            g["freq_ghz"] * 1e9, g["d1_m"], g["d2_m"],
            perf_metrics.db_to_lin(g["gt_dbi"]), perf_metrics.db_to_lin(g["gr_dbi"])))

    def misalignment(self) -> thz_channel.Misalignment:
        m = self.data["misalignment"]
        if (m["a_o"] is None) != (m["gamma"] is None):
            raise ConfigError("misalignment: give both a_o and gamma, or neither")
        if m["a_o"] is not None:
            return _guard("misalignment", lambda: thz_channel.Misalignment.from_shape(
                m["a_o"], m["gamma"] ** 2))
        return _guard("misalignment", lambda: thz_channel.Misalignment.from_geometry(
            m["detect_radius_m"], m["beam_radius_m"], m["jitter_sigma_m"]))

    def hops(self) -> tuple[tuple, tuple]:
        h = self.data["hops"]
        if h["elements"] is not None:
            if not isinstance(h["elements"], list) or not h["elements"]:
                raise ConfigError("hops.elements must be a nonempty list")
            pairs = [(_hop(_hop_dict(e.get("hop1"), f"hops.elements[{i}].hop1")),
                      _hop(_hop_dict(e.get("hop2"), f"hops.elements[{i}].hop2")))
                     for i, e in enumerate(h["elements"])]
            return tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)
        n = h["l_elements"]
        if not isinstance(n, int) or n < 1:
            raise ConfigError("hops.l_elements must be a positive integer")
        return (_hop(h["hop1"]),) * n, (_hop(h["hop2"]),) * n

    def model(self, power_dbw: float = 0.0, l_elements: int | None = None) -> perf_metrics.SystemModel:
        hop1, hop2 = self.hops()
        if l_elements is not None:
            hop1, hop2 = (hop1[0],) * l_elements, (hop2[0],) * l_elements
        link = self.data["link"]
        hw = self.data["hardware"]
        kw = {"h_l": link["h_l"]} if link["h_l"] is not None else {
            "geom": self.geometry(), "env": self.environment()}
        return _guard("hardware", lambda: perf_metrics.SystemModel(
            hop1, hop2, self.misalignment(),
            hw=perf_metrics.HardwareProfile(hw["kappa_s"], hw["kappa_d"]),
            power_w=perf_metrics.db_to_lin(power_dbw),
            noise_w=perf_metrics.db_to_lin(link["noise_dbw"]), **kw))

    def power_grid(self) -> list[float]:
        p = self.data["power_grid"]
        if p["values_dbw"] is not None:
            return [float(v) for v in p["values_dbw"]]
        if not p["step_db"] > 0 or p["stop_dbw"] < p["start_dbw"]:
            raise ConfigError("power_grid: need step_db > 0 and stop_dbw >= start_dbw")
        n = int(math.floor((p["stop_dbw"] - p["start_dbw"]) / p["step_db"] + 1e-9)) + 1
        return [p["start_dbw"] + i * p["step_db"] for i in range(n)]


def _hop(d: dict) -> FtrParams:
    try:
        if "sigma" in d:
            return FtrParams.from_sigma(d["k"], d["m"], d["delta"], d["sigma"])
        return perf_metrics.ftr_from_db(d["k"], d["m"], d["delta"], d.get("mean_power_db", 0.0))
    except (RisThzError, TypeError, ValueError) as exc:
        raise ConfigError(f"hops: {exc}") from None


def _guard(section: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except (RisThzError, TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _open_csv(out_dir: str, name: str, kind: str, header: list[str]):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    fh = open(path, "w", newline="", encoding="utf-8")
    fh.write(f"# risthz {kind} v{SCHEMA_VERSION}\n")
    w = csv.writer(fh)
    w.writerow(header)
    return fh, w, path


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.10g}" if isinstance(v, float) else str(v)


class _Ctx:
    def __init__(self, config, seed, threads, out):
        self.cfg = RunConfig.load(config)
        self.seed = seed
        self.threads = threads or (os.cpu_count() or 1)
        self.out = out or self.cfg.section("output")["dir"]


def _run(fn):
    """Map library errors to exit codes."""
    try:
        return fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except RisThzError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


@click.group()
@click.option("--config", "config", type=click.Path(), default=None, help="JSON run config.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker threads (default: all cores).")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config, seed, threads, out, verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = _run(lambda: _Ctx(config, seed, threads, out))


@main.command()
@click.option("--start-ghz", type=float, default=275.0, show_default=True)
@click.option("--stop-ghz", type=float, default=400.0, show_default=True)
@click.option("--step-ghz", type=float, default=1.0, show_default=True)
@click.pass_obj
def absorption(obj: _Ctx, start_ghz, stop_ghz, step_ghz):
    """Absorption coefficient and absorption gain over a frequency grid."""
    def go():
        if not step_ghz > 0 or stop_ghz < start_ghz:
            raise ConfigError("frequency grid: need step > 0 and stop >= start")
        env = obj.cfg.environment()
        g = obj.cfg.section("geometry")
        freqs = np.arange(start_ghz, stop_ghz + 0.5 * step_ghz, step_ghz) * 1e9
        freqs = freqs[freqs <= stop_ghz * 1e9 + 1.0]
        try:
            kappa = np.atleast_1d(thz_channel.absorption_coefficient(freqs, env))
        except RisThzError as exc:
            raise ConfigError(f"frequency grid: {exc}") from None
        fh, w, path = _open_csv(obj.out, "absorption.csv", "absorption",
                                ["freq_ghz", "kappa_per_m", "h_al"])
        with fh:
            for f, k in zip(freqs, kappa):
                w.writerow([_fmt(f / 1e9), _fmt(float(k)),
                            _fmt(math.exp(-0.5 * k * (g["d1_m"] + g["d2_m"])))])
        click.echo(path)
    _run(go)


def _try(label, fn, warned: set):
    try:
        return fn()
    except RisThzError as exc:
        if label not in warned:
            log.warning("method %s skipped: %s", label, exc)
            warned.add(label)
        return None


@main.command("op-curve")
@click.option("--sweep", type=click.Choice(["power", "threshold"]), default="power",
              show_default=True)
@click.pass_obj
def op_curve(obj: _Ctx, sweep):
    """Outage probability versus transmit power (or versus threshold at fixed power)."""
    def go():
        o = obj.cfg.section("outage")
        methods = list(o["methods"])
        unknown = set(methods) - {"exact", "high-sndr", "clt", "5fm", "mc"}
        if unknown:
            raise ConfigError(f"outage.methods: unknown method {sorted(unknown)[0]}")
        base = obj.cfg.model(0.0)
        if "exact" in methods and base.l_elements > perf_metrics.MAX_L_EXACT_CDF:
            log.warning("exact column omitted: L=%d exceeds %d", base.l_elements,
                        perf_metrics.MAX_L_EXACT_CDF)
            methods.remove("exact")
        if sweep == "power":
            xs = obj.cfg.power_grid()
            points = [(p, perf_metrics.db_to_lin(o["threshold_db"])) for p in xs]
            xname = "p_dbw"
        else:
            ths = o["thresholds_db"] or [-10.0, -5.0, 0.0, 5.0, 10.0]
            xs = [float(t) for t in ths]
            points = [(o["power_dbw"], perf_metrics.db_to_lin(t)) for t in xs]
            xname = "threshold_db"
        n_mc = obj.cfg.section("monte_carlo")["n_samples"]
        draws = None
        if "mc" in methods:
            run = montecarlo.McRun(base, n_mc, obj.seed, threads=obj.threads)
            draws = montecarlo._draw(run)
        header = [xname] + [m for m in methods if m != "mc"]
        if "mc" in methods:
            header += ["mc", "mc_lo", "mc_hi"]
        rows, warned = [], set()
        fit = None
        for x, (p_dbw, th) in zip(xs, points):
            mod = base.with_power(perf_metrics.db_to_lin(p_dbw))
            row = [_fmt(x)]
            for m in methods:
                if m == "mc":
                    est = montecarlo.op_from_samples(perf_metrics.sndr(*draws, mod), th)
                    row += [_fmt(est.value), _fmt(est.lo), _fmt(est.hi)]
                elif m == "5fm":
                    if fit is None:
                        fit = _try("5fm", lambda: perf_metrics.five_moment_fit(base), warned)
                    row.append(_fmt(None if fit is None else _try(
                        "5fm", lambda: perf_metrics.cdf_high_l_5fm(th, mod, fit), warned)))
                else:
                    row.append(_fmt(_try(m, lambda: perf_metrics.outage(th, mod, m), warned)))
            rows.append(row)
        keep = [i for i, h in enumerate(header) if i == 0 or any(r[i] != "" for r in rows)]
        fh, w, path = _open_csv(obj.out, "op_curve.csv", "op-curve", [header[i] for i in keep])
        with fh:
            for r in rows:
                w.writerow([r[i] for i in keep])
        click.echo(path)
    _run(go)


@main.command("capacity-curve")
@click.option("--sweep", type=click.Choice(["power", "l"]), default="power", show_default=True)
@click.pass_obj
def capacity_curve(obj: _Ctx, sweep):
    """Ergodic capacity (MC), Jensen upper bound and, where feasible, the exact ideal value."""
    def go():
        c = obj.cfg.section("capacity")
        n_mc = obj.cfg.section("monte_carlo")["n_samples"]
        if sweep == "power":
            cases = [(p, None) for p in obj.cfg.power_grid()]
            xname = "p_dbw"
        else:
            ls = c["l_values"] or [20, 40, 60, 80, 100]
            if not all(isinstance(v, int) and v >= 1 for v in ls):
                raise ConfigError("capacity.l_values must be positive integers")
            cases = [(c["power_dbw"], int(v)) for v in ls]
            xname = "l_elements"
        header = [xname, "c_mc", "c_mc_lo", "c_mc_hi", "c_upper", "c_exact"]
        rows, warned, cache = [], set(), {}
        for p_dbw, l_el in cases:
            mod = obj.cfg.model(p_dbw, l_el)
            key = mod.l_elements
            if key not in cache:
                run = montecarlo.McRun(mod, n_mc, obj.seed, threads=obj.threads)
                cache = {key: montecarlo._draw(run)}
            est = montecarlo.capacity_from_samples(perf_metrics.sndr(*cache[key], mod))
            if mod.kappa_sq > 0:
                upper = perf_metrics.capacity_upper_nonideal(mod)
                exact = None
            else:
                upper = perf_metrics.capacity_upper_ideal(mod)
                exact = (_try("exact", lambda: perf_metrics.capacity_exact_ideal(mod), warned)
                         if c["exact"] else None)
            rows.append([_fmt(float(l_el) if l_el else p_dbw), _fmt(est.value), _fmt(est.lo),
                         _fmt(est.hi), _fmt(upper), _fmt(exact)])
        keep = [i for i, h in enumerate(header) if any(r[i] != "" for r in rows)]
        fh, w, path = _open_csv(obj.out, "capacity_curve.csv", "capacity-curve",
                                [header[i] for i in keep])
        with fh:
            for r in rows:
                w.writerow([r[i] for i in keep])
        click.echo(path)
    _run(go)


def _swarm_configs(obj: _Ctx):
    o = obj.cfg.section("optimizer")
    if o["algorithm"] not in ("sio", "pso"):
        raise ConfigError("optimizer.algorithm must be 'sio' or 'pso'")
    ris = _guard("optimizer", lambda: ris_sio.RisConfig(o["l_elements"],
                                                        math.radians(o["delta_theta_deg"])))
    cfg = _guard("optimizer", lambda: ris_sio.SwarmConfig(
        o["n_begin"], o["n_end"], o["omega_begin"], o["omega_end"], o["c1"], o["c2"], o["c3"],
        math.radians(o["v_max_deg"]), o["max_iter"], obj.seed))
    return o, ris, cfg


def _write_trace(out_dir: str, name: str, res) -> str:
    cols = ["iteration", "n_particles", "best_fitness", "ratio_to_bound", "omega"]
    if res.trace and "ratio_to_e_opt" in res.trace[0]:
        cols.append("ratio_to_e_opt")
    fh, w, path = _open_csv(out_dir, f"{name}_trace.csv", "sio-trace", cols)
    with fh:
        for row in res.trace:
            w.writerow([_fmt(row[c]) for c in cols])
    return path


@main.command()
@click.pass_obj
def sio(obj: _Ctx):
    """Run the phase-shift optimiser on one seeded channel draw; writes the trace CSV."""
    def go():
        o, ris, cfg = _swarm_configs(obj)
        hop1, hop2 = obj.cfg.hops()
        mod = obj.cfg.model(0.0, o["l_elements"])
        env = ris_sio.make_environment(
            hop1[0], hop2[0], o["l_elements"], obj.cfg.misalignment(), mod.h_l, seed=obj.seed,
            meas_noise_sigma=o["meas_noise_sigma"], meas_avg_count=o["meas_avg_count"],
            noise_seed=obj.seed, e_opt=perf_metrics.e_opt(mod))
        algo = ris_sio.sio_optimize if o["algorithm"] == "sio" else ris_sio.pso_optimize
        res = algo(env, ris, cfg)
        path = _write_trace(obj.out, o["algorithm"], res)
        summary = {"algorithm": o["algorithm"], "iterations_to_0.9": res.iterations_to(0.9),
                   "final_ratio": res.final_ratio, "best_fitness": res.best_fitness}
        if o["compare_pso"] and o["algorithm"] == "sio":
            env.reset_noise(obj.seed)
            other = ris_sio.pso_optimize(env, ris, cfg)
            _write_trace(obj.out, "pso", other)
            summary["pso_iterations_to_0.9"] = other.iterations_to(0.9)
            summary["pso_final_ratio"] = other.final_ratio
        click.echo(path)
        click.echo(json.dumps(summary, default=str))
    _run(go)


@main.command()
@click.argument("csv_path", type=click.Path())
@click.option("--families", default=",".join(fitkit.FAMILIES), show_default=True)
@click.pass_obj
def fit(obj: _Ctx, csv_path, families):
    """Fit amplitude samples (one per line) and report K-S statistics."""
    def go():
        fams = [f.strip() for f in families.split(",") if f.strip()]
        bad = [f for f in fams if f not in fitkit.FAMILIES]
        if bad:
            raise ConfigError(f"unknown family {bad[0]}")
        try:
            samples = fitkit.load_csv(csv_path)
        except OSError as exc:
            raise ConfigError(f"cannot read {csv_path}: {exc}") from None
        results = fitkit.fit_all(samples, fams)
        os.makedirs(obj.out, exist_ok=True)
        path = os.path.join(obj.out, "fit_report.csv")
        fitkit.write_report(results, path)
        for r in sorted(results, key=lambda r: r.ks_stat):
            click.echo(f"{r.family:10s} ks={r.ks_stat:.4f} {'pass' if r.pass_5pct else 'fail'}")
    _run(go)


@main.command()
@click.argument("suite", type=click.Choice(["ftr", "channel", "foxh", "sio", "fit", "all"]))
@click.pass_obj
def validate(obj: _Ctx, suite):
    """Quick self-checks; exit 1 when any check fails."""
    from . import selfcheck
    names = list(selfcheck.SUITES) if suite == "all" else [suite]
    ok = True
    for name in names:
        for label, passed, detail in selfcheck.SUITES[name]():
            ok &= passed
            click.echo(f"[{'PASS' if passed else 'FAIL'}] {name}: {label} ({detail})")
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
