"""Command line entry point: ``powersched {validate,simulate,sweep,bounds,dp}``.

Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
3 infeasible configuration, 4 unsupported dimension.  Thread count for the
compiled kernels follows ``POWERSCHED_NUM_THREADS``; ``POWERSCHED_BACKEND``
selects ``numba`` or ``numpy``.
"""

import argparse
import csv
import io
import datetime as _dt
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from . import analysis
from .channel import check_stability_assumption
from .config import ConfigError, document_for, load
from .dp import finite_dp_solve, infinite_dp_solve
from .errors import DimensionError, DomainError, InfeasibleError, PowerSchedError, UsageError
from .kernels import METRICS
from .linalg import controllability_rank
from .sched import GridDPFinite, GridDPInfinite, GridSpec
from .sim import run_monte_carlo, run_trial
from .svg import line_chart

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_DIMENSION = 0, 1, 2, 3, 4
MAX_TRACES = 10


def fmt(v):
    """Locale-free text with 12 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_atomic(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([fmt(v) for v in row] for row in rows)
    return buf.getvalue()


def write_manifest(out_dir, cfg_doc, seed, outputs):
    manifest = {"config": cfg_doc, "version": __version__,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                "seed": seed, "outputs": sorted(outputs)}
    write_atomic(os.path.join(out_dir, "manifest.json"),
                 json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    cfg = load(args.config)
    model, ch, dist = cfg.spec.model, cfg.spec.ch, cfg.spec.dist
    print(f"schema: ok (n={model.n}, m={model.m})")
    rank = controllability_rank(model.A, model.B)
    tag = "ok" if rank == model.n else "warning: (A, B) not controllable"
    print(f"controllability rank: {rank}/{model.n} {tag}")
    holds, lhs, rhs = check_stability_assumption(dist, ch, model.A)
    rel = "<" if holds else ">="
    print(f"stability assumption: lhs = E[q_m(a)] = {lhs:.6g} {rel} rhs = 1/rho(A)^2 = {rhs:.6g}")
    if not holds:
        print("stability assumption violated", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_simulate(args):
    cfg = load(args.config)
    spec = cfg.spec
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if changes:
        spec = spec.replace(**changes)
    rep = run_monte_carlo(spec)
    rows = [(m, rep.mean[m], rep.std[m], rep.stderr[m], rep.trials) for m in METRICS]
    outputs = ["metrics.csv"]
    write_atomic(os.path.join(args.out, "metrics.csv"),
                 csv_text(("metric", "mean", "std", "stderr", "trials"), rows))
    if args.traces or spec.record_traces:
        tspec = spec.replace(record_traces=True)
        for i in range(min(spec.trials, args.trace_count)):
            _, tr = run_trial(tspec, i)
            name = f"trace_{i}.csv"
            write_atomic(os.path.join(args.out, name), csv_text(tr.header, tr.rows()))
            outputs.append(name)
    write_manifest(args.out, document_for(spec, cfg.doc.get("sweep")), spec.master_seed, outputs)
    print(f"reduced_cost = {fmt(rep.mean['reduced_cost'])} +- {fmt(rep.stderr['reduced_cost'])} "
          f"over {rep.trials} trials")
    return EXIT_OK


def _sweep_power(cfg):
    sw = cfg.sweep
    rows = analysis.sweep_power_tradeoff(sw["powers"], cfg.spec, greedy=tuple(sw["greedy"]),
                                         power_range=tuple(sw["power_range"]),
                                         n_lambda=sw["n_lambda"], pilot_trials=sw["pilot_trials"])
    header = ("scheduler", "param", "avg_power", "avg_power_stderr", "mse", "mse_stderr")
    series = {}
    for r in rows:
        series.setdefault(r["scheduler"], []).append((r["avg_power"], r["mse"]))
    chart = line_chart(series, "MSE vs average power", "average power", "MSE")
    return header, [[r[h] for h in header] for r in rows], chart


def _sweep_lambda(cfg):
    rows = analysis.sweep_lambda_costs(cfg.sweep["lambdas"], cfg.spec)
    header = ("lambda", "scheduler", "cost_mean", "cost_stderr", "theoretical")
    series = {}
    for r in rows:
        series.setdefault(r["scheduler"], []).append((r["lambda"], r["cost_mean"]))
        if np.isfinite(r["theoretical"]):
            series.setdefault(r["scheduler"] + " theory", []).append((r["lambda"], r["theoretical"]))
    chart = line_chart(series, "reduced cost vs lambda", "lambda", "reduced cost", logx=True)
    return header, [[r[h] for h in header] for r in rows], chart


def _sweep_dist(cfg):
    header = ("dist", "mean_attack", "cost_mean", "cost_stderr", "upper_bound")
    rows, series = [], {}
    for mu, group in analysis.group_by_mean(cfg.sweep["dist_objects"]).items():
        grp_rows, diffs = analysis.compare_attack_distributions(group, cfg.spec)
        rows.extend(grp_rows)
        series[f"mean {mu:g}"] = [(i, r["cost_mean"]) for i, r in enumerate(grp_rows)]
        series[f"bound {mu:g}"] = [(i, r["upper_bound"]) for i, r in enumerate(grp_rows)]
        for i, j, delta, se in diffs:
            print(f"mean {mu:g}: {grp_rows[i]['dist']} - {grp_rows[j]['dist']} = "
                  f"{delta:.6g} (combined stderr {se:.3g})")
    chart = line_chart(series, "reduced cost per attack distribution", "distribution index",
                       "reduced cost")
    return header, [[r[h] for h in header] for r in rows], chart


SWEEPS = {"power": _sweep_power, "lambda": _sweep_lambda, "dist": _sweep_dist}


def cmd_sweep(args):
    if args.mode not in SWEEPS:
        raise UsageError(f"unknown sweep mode {args.mode!r}")
    cfg = load(args.config)
    header, rows, chart = SWEEPS[args.mode](cfg)
    outputs = ["sweep.csv"]
    write_atomic(os.path.join(args.out, "sweep.csv"), csv_text(header, rows))
    if args.svg:
        name = f"sweep_{args.mode}.svg"
        write_atomic(os.path.join(args.out, name), chart)
        outputs.append(name)
    write_manifest(args.out, cfg.doc, cfg.spec.master_seed, outputs)
    print(f"{len(rows)} rows written to {os.path.join(args.out, 'sweep.csv')}")
    return EXIT_OK


def cmd_bounds(args):
    cfg = load(args.config)
    s = cfg.spec
    rep = analysis.upper_bound_total(s.model, s.ch, s.dist, s.lam)
    print(f"q_tilde = {fmt(rep.q_tilde)}")
    print(f"p_tilde = {fmt(rep.p_tilde)}")
    print(f"reduced_upper_bound = {fmt(rep.reduced_upper_bound)}")
    print(f"upper_bound = {fmt(rep.upper_bound)}")
    print(f"constant_pmax_cost = {fmt(rep.pmax_constant_cost)}")
    return EXIT_OK


def cmd_dp(args):
    cfg = load(args.config)
    s = cfg.spec
    if s.model.n != 1 or s.model.m != 1:
        raise DimensionError(f"grid DP supports scalar systems only, got n={s.model.n}, m={s.model.m}")
    grid = s.sched.grid if isinstance(s.sched, (GridDPFinite, GridDPInfinite)) else GridSpec()
    if args.grid_points is not None:
        grid = GridSpec(e_max=grid.e_max, n_e=args.grid_points, n_a=grid.n_a,
                        n_quad=grid.n_quad, n_q=grid.n_q)
    if args.horizon == "finite":
        mode = "stationary" if s.gains_mode == "stationary" else "finite"
        table = finite_dp_solve(s.model, s.ch, s.dist, grid, s.T, s.lam, gains_mode=mode)
        log = [(k, float(np.max(np.abs(table.V[k] - table.V[k + 1]))))
               for k in range(s.T - 1, -1, -1)]
        log_header = ("stage", "sup_delta")
    else:
        tol = s.sched.tol if isinstance(s.sched, GridDPInfinite) else 1e-6
        table = infinite_dp_solve(s.model, s.ch, s.dist, grid, s.lam, tol=tol)
        log = [(it, sup) for it, sup, _ in table.log]
        log_header = ("iteration", "sup_delta")
        print(f"value iteration: {len(log)} sweeps, residual {table.residual:.3e}")
    write_atomic(os.path.join(args.out, "value_table.csv"), csv_text(table.header, table.rows()))
    write_atomic(os.path.join(args.out, "convergence.csv"), csv_text(log_header, log))
    write_manifest(args.out, cfg.doc, s.master_seed, ["value_table.csv", "convergence.csv"])
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="powersched",
                                description="Transmission power scheduling under jamming.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config and the stability assumption")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="Monte Carlo run of the configured scheduler")
    s.add_argument("config")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="out")
    s.add_argument("--traces", action="store_true", help="write per-step trace files")
    s.add_argument("--trace-count", type=int, default=MAX_TRACES)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="power, lambda or attack-distribution sweeps")
    w.add_argument("config")
    w.add_argument("--mode", required=True, choices=sorted(SWEEPS))
    w.add_argument("--out", default="out")
    w.add_argument("--svg", action="store_true")
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bounds", help="optimal constant drop target and cost bounds")
    b.add_argument("config")
    b.set_defaults(func=cmd_bounds)

    d = sub.add_parser("dp", help="grid dynamic programming for scalar systems")
    d.add_argument("config")
    d.add_argument("--horizon", choices=("finite", "infinite"), default="infinite")
    d.add_argument("--grid-points", type=int)
    d.add_argument("--out", default="out")
    d.set_defaults(func=cmd_dp)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DimensionError as exc:
        print(f"dimension: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (PowerSchedError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
