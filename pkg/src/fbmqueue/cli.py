"""Command-line front end: ``fbmqueue <subcommand> --config run.yaml [--set key=value ...]``.

Each run writes ``<subcommand>_<label>.csv`` and ``<subcommand>_<label>.manifest.json``
into the configured output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, apply_overrides, default_config
from .control import (abelian_check, constrained_grid_scan, log_grid, optimize_constrained,
                      optimize_discounted, optimize_ergodic, optimize_finite_horizon)
from .costs import CostFunctionSpec, discounted_cost, ergodic_cost_reduced, finite_horizon_cost
from .errors import BracketError, ConfigError, DomainError, PreconditionError
from .fgn import NS_PATHS, NS_ZU, TimeGrid, stream_index
from .montecarlo import path_bank
from .onoff import simulate_onoff_queue, variance_exponent
from .skorokhod import PositiveFunction, reflect_array
from .stationary import sample_Zu, tail_slope

log = logging.getLogger("fbmqueue")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_IO = 0, 1, 2, 3, 4

SUBCOMMANDS = ("simulate", "zu", "ergodic", "constrained", "discounted", "finite",
               "abelian", "onoff", "selftest")


class Table:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []

    def add(self, **row):
        self.rows.append([row.get(c, "") for c in self.columns])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _search_grid(cfg: ExperimentConfig, include_zero=False):
    lo, hi = cfg.tasks["search_range"]
    return log_grid(float(lo), float(hi), int(cfg.tasks["search_points"]), include_zero)


def _path_streams(est):
    return stream_index(NS_PATHS, 0), stream_index(NS_PATHS, est.n_paths)


def _zu_streams(est):
    return stream_index(NS_ZU, 0), stream_index(NS_ZU, est.zu_samples)


# ---------------------------------------------------------------------------
# Subcommands. Each returns (table, summary dict).
# ---------------------------------------------------------------------------


def run_simulate(cfg: ExperimentConfig):
    model, est = cfg.build_model(), cfg.build_estimator()
    block = cfg.tasks["simulate"]
    u = float(block["u"])
    n_out = min(int(block["n_out"]), est.n_paths)
    bank = path_bank(model.H, TimeGrid.covering(est.horizon, est.dt), est)
    times = bank.grid.times
    f = model.x - float(model.drift_b(u)) * times + float(model.sigma(u)) * bank.W[:n_out]
    X, L = reflect_array(f)
    t = Table(["path", "t", "W", "X", "L", "master_seed", "stream"])
    for i in range(n_out):
        s = stream_index(NS_PATHS, i)
        for k in range(times.size):
            t.add(path=i, t=times[k], W=bank.W[i, k], X=X[i, k], L=L[i, k],
                  master_seed=est.master_seed, stream=s)
    return t, {"u": u, "n_paths": n_out, "n_steps": bank.grid.n_steps}


def run_zu(cfg: ExperimentConfig):
    model, est = cfg.build_model(), cfg.build_estimator()
    block = cfg.tasks["zu"]
    lo, hi = _zu_streams(est)
    t = Table(["u", "H", "n", "mean", "stderr", "slope", "theta_ref", "slope_rel_err",
               "horizon_used", "dt_used", "master_seed", "stream_lo", "stream_hi"])
    for u in block["u_values"]:
        zs = sample_Zu(float(u), model.H, est)
        fit = tail_slope(zs, tuple(block["quantiles"]), min_samples=min(10_000, zs.n))
        t.add(u=float(u), H=model.H, n=zs.n, mean=float(zs.samples.mean()),
              stderr=float(zs.samples.std(ddof=1) / np.sqrt(zs.n)),
              slope=fit.slope if fit.ok else "", theta_ref=-fit.reference,
              slope_rel_err=fit.relative_error if fit.ok else "", horizon_used=zs.horizon_used,
              dt_used=zs.dt_used, master_seed=est.master_seed, stream_lo=lo, stream_hi=hi)
    return t, {}


_CURVE_COLUMNS = ["row", "u", "value", "stderr", "control", "holding", "regulator",
                  "master_seed", "stream_lo", "stream_hi"]


def _curve(t, us, evaluate, est, streams):
    for u in us:
        e = evaluate(float(u))
        t.add(row="curve", u=float(u), value=e.value.mean, stderr=e.value.stderr,
              control=e.components["control"].mean, holding=e.components["holding"].mean,
              regulator=e.components["regulator"].mean, master_seed=est.master_seed,
              stream_lo=streams[0], stream_hi=streams[1])


def _optimum_row(t, res, est, streams):
    t.add(row="optimum", u=res.u_star, value=res.value.mean, stderr=res.value.stderr,
          master_seed=est.master_seed, stream_lo=streams[0], stream_hi=streams[1])
    return {"u_star": res.u_star, "value": res.value.mean, "bracket": list(res.bracket),
            "convexity_assumed": res.convexity_assumed, "warnings": list(res.warnings),
            "n_probes": len(res.history)}


def run_ergodic(cfg: ExperimentConfig):
    model, est = cfg.build_model(), cfg.build_estimator()
    h, C = cfg.build_costs()
    t = Table(_CURVE_COLUMNS)
    s = _zu_streams(est)
    _curve(t, cfg.tasks["u_grid"], lambda u: ergodic_cost_reduced(u, model, h, C, est), est, s)
    return t, _optimum_row(t, optimize_ergodic(model, h, C, est, _search_grid(cfg)), est, s)


def run_constrained(cfg: ExperimentConfig):
    model, est = cfg.build_model(), cfg.build_estimator()
    h, C = cfg.build_costs()
    lo, hi = _zu_streams(est)
    t = Table(["m", "u_star", "value", "stderr", "u0_star", "binding", "scan_argmin",
               "scan_resolution", "master_seed", "stream_lo", "stream_hi"])
    for m in cfg.tasks["m_grid"]:
        r = optimize_constrained(model, h, C, float(m), est, _search_grid(cfg))
        scan, res = constrained_grid_scan(model, h, C, float(m), est)
        t.add(m=float(m), u_star=r.u_star, value=r.value.mean, stderr=r.value.stderr,
              u0_star=r.info["u0_star"], binding=r.info["binding"], scan_argmin=scan,
              scan_resolution=res, master_seed=est.master_seed, stream_lo=lo, stream_hi=hi)
    return t, {}


def run_discounted(cfg: ExperimentConfig):
    model, est = cfg.build_model(), cfg.build_estimator()
    h, C = cfg.build_costs()
    alpha = float(cfg.tasks["alpha"])
    t = Table(_CURVE_COLUMNS)
    s = _path_streams(est)
    _curve(t, cfg.tasks["u_grid"],
           lambda u: discounted_cost(model.x, u, alpha, model, h, C, est), est, s)
    res = optimize_discounted(model.x, alpha, model, h, C, est, _search_grid(cfg, True))
    return t, {"alpha": alpha, **_optimum_row(t, res, est, s)}


def run_finite(cfg: ExperimentConfig):
    model, est = cfg.build_model(), cfg.build_estimator()
    h, C = cfg.build_costs()
    T = float(cfg.tasks["T"])
    t = Table(_CURVE_COLUMNS)
    s = _path_streams(est)
    _curve(t, cfg.tasks["u_grid"],
           lambda u: finite_horizon_cost(model.x, u, T, model, h, C, est), est, s)
    res = optimize_finite_horizon(model.x, T, model, h, C, est, _search_grid(cfg, True))
    return t, {"T": T, **_optimum_row(t, res, est, s)}


def run_abelian(cfg: ExperimentConfig):
    model, est = cfg.build_model(), cfg.build_estimator()
    h, C = cfg.build_costs()
    fixed = cfg.tasks["fixed_u"]
    rep = abelian_check(model.x, model, h, C, cfg.tasks["alpha_seq"], cfg.tasks["T_seq"], est,
                        fixed_u=None if fixed is None else float(fixed),
                        u_grid=_search_grid(cfg, True))
    lo, hi = _path_streams(est)
    t = Table(["row", "param", "scaled_value", "stderr", "u_star", "deviation",
               "master_seed", "stream_lo", "stream_hi"])
    for kind, rows in (("alpha", rep.alpha_rows), ("T", rep.T_rows)):
        for r in rows:
            t.add(row=kind, param=r.param, scaled_value=r.scaled_value, stderr=r.stderr,
                  u_star=r.u_star, deviation=r.deviation, master_seed=est.master_seed,
                  stream_lo=lo, stream_hi=hi)
    zlo, zhi = _zu_streams(est)
    t.add(row="reference", scaled_value=rep.reference.mean, stderr=rep.reference.stderr,
          u_star=rep.u_star_ergodic if rep.u_star_ergodic is not None else rep.fixed_u,
          master_seed=est.master_seed, stream_lo=zlo, stream_hi=zhi)
    return t, {"alpha_trend_ok": rep.alpha_trend_ok, "T_trend_ok": rep.T_trend_ok,
               "u_bounded": rep.diagnostics["u_bounded"]}


def run_onoff(cfg: ExperimentConfig):
    spec = cfg.build_onoff()
    block = cfg.tasks["onoff"]
    est = cfg.build_estimator()
    seed = est.master_seed
    run = simulate_onoff_queue(spec, float(block["horizon"]), seed, float(block["dt"]), est.workers)
    fit = variance_exponent(spec, float(block["horizon"]), seed, int(block["n_replicas"]),
                            float(block["dt"]), workers=est.workers)
    t = Table(["t", "queue", "regulator", "input", "master_seed", "stream_lo", "stream_hi"])
    for k, tt in enumerate(run.queue.times):
        t.add(t=tt, queue=run.queue.values[k], regulator=run.regulator.values[k],
              input=run.input.values[k], master_seed=seed, stream_lo=run.report["stream_lo"],
              stream_hi=run.report["stream_hi"])
    return t, {"H": spec.H, "scaled_drift": run.report["scaled_drift"], "u": spec.u,
               "on_fraction": run.on_fraction, "lam": spec.lam,
               "variance_exponent": fit.exponent, "target_2H": fit.target,
               "lags": list(fit.lags), "n_replicas": fit.n_replicas}


def run_selftest(cfg: ExperimentConfig):
    """Quadratic example at H = 1/2 against its closed form; tolerances from ``tasks.selftest``."""
    tol = cfg.tasks["selftest"]
    model, est = cfg.build_model(), cfg.build_estimator()
    h, C = cfg.build_costs()
    model = model.with_(H=0.5, sigma=PositiveFunction.constant(), drift_b=PositiveFunction.power())
    t = Table(["check", "estimate", "target", "tolerance", "passed", "master_seed",
               "stream_lo", "stream_hi"])
    lo, hi = _zu_streams(est)

    def check(name, est_v, target, tol_v, ok):
        t.add(check=name, estimate=est_v, target=target, tolerance=tol_v, passed=ok,
              master_seed=est.master_seed, stream_lo=lo, stream_hi=hi)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {est_v:.4f} (target {target:.4f}, tol {tol_v})")
        return ok

    if h != CostFunctionSpec.power(1.0, 2.0) or C != CostFunctionSpec.power(1.0, 1.0):
        raise ConfigError("costs", "selftest needs h(u) = u^2 and C(x) = x")
    zs = sample_Zu(1.0, 0.5, est)
    ok = check("mean Z_1", float(zs.samples.mean()), 0.5, tol["zu_mean_rel"],
               abs(zs.samples.mean() / 0.5 - 1) <= tol["zu_mean_rel"])
    for p, u_exact in ((1.0, 0.5), (0.0, 4 ** (-1 / 3))):
        m = model.with_(p=p)
        r = optimize_ergodic(m, h, C, est, _search_grid(cfg))
        value = u_exact**2 + p * u_exact + 1 / (2 * u_exact)
        ok &= check(f"u* (p={p:g})", r.u_star, u_exact, tol["u_star_abs"],
                    abs(r.u_star - u_exact) <= tol["u_star_abs"])
        ok &= check(f"I* (p={p:g})", r.value.mean, value, tol["value_rel"],
                    abs(r.value.mean / value - 1) <= tol["value_rel"])
    return t, {"passed": bool(ok)}


RUNNERS = {"simulate": run_simulate, "zu": run_zu, "ergodic": run_ergodic,
           "constrained": run_constrained, "discounted": run_discounted, "finite": run_finite,
           "abelian": run_abelian, "onoff": run_onoff, "selftest": run_selftest}


def write_outputs(cfg: ExperimentConfig, sub: str, table: Table, summary: dict,
                  wall: float) -> tuple[Path, Path]:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{sub}_{cfg.label}"
    results = out / f"{stem}.csv"
    results.write_text(table.to_csv())
    est = cfg.build_estimator()
    manifest = {
        "subcommand": sub, "label": cfg.label, "config_sha256": cfg.sha256(),
        "master_seed": est.master_seed, "estimator_fingerprint": est.fingerprint(),
        "versions": {"fbmqueue": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_clock_seconds": round(wall, 3), "results": results.name,
        "summary": summary, "config": cfg.to_dict(),
    }
    path = out / f"{stem}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return results, path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbmqueue", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("-c", "--config", help="YAML experiment file (selftest has a built-in default)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. estimator.n_paths=500")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(sub: str, path, overrides) -> ExperimentConfig:
    if path is None:
        if sub != "selftest":
            raise ConfigError("--config", f"{sub} needs a config file")
        base = default_config().to_dict()
        return ExperimentConfig.from_dict(apply_overrides(base, overrides))
    return ExperimentConfig.load(path, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.subcommand, args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    start = time.perf_counter()
    try:
        table, summary = RUNNERS[args.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BracketError as exc:
        print(f"bracket error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (PreconditionError, DomainError) as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    try:
        results, manifest = write_outputs(cfg, args.subcommand, table, summary,
                                          time.perf_counter() - start)
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {results} and {manifest}")
    if args.subcommand == "selftest" and not summary["passed"]:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
