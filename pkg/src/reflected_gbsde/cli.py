"""Command-line front end: ``solve``, ``study`` and ``check``.

Every command validates its config before computing, computes everything
before writing, and writes each file through a temporary name, so a
failure never leaves partial output.

Exit codes: 0 success, 1 invalid config or violated precondition,
2 numerical failure (CFL, non-finite values, broken monotonicity),
3 convergence failure, 4 at least one check row failed.  Errors are
also reported as one JSON line on standard error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .checks import run_suite
from .config import RunConfig, build_problem, load_config
from .errors import ConvergenceFailure, GBSDEError, NumericalFailure, PreconditionError
from .oracle import AmericanPutSpec, crr_price
from .report import csv_text, loglog_svg, write_atomic
from .rgbsde import (
    apriori_norms,
    martingale_condition_check,
    solve_penalized,
    solve_picard,
    solve_reflected_lipschitz,
)

__all__ = ["main", "build_parser", "EXIT_CODES"]

EXIT_CODES = {"ok": 0, "config": 1, "numerical": 2, "convergence": 3, "check": 4}

SURFACE_HEADER = ("time_index", "space_index", "x", "Y", "Z", "lift", "policy_variance")
STUDY_HEADER = ("kind", "point", "y0", "gap", "delta", "Y_sup_norm", "Z_l2_norm", "A_terminal_norm", "order")


def _solve(cfg: RunConfig, lattice, threads: int):
    prob = build_problem(cfg)
    extra = {}
    if cfg.method == "lipschitz":
        surface = solve_reflected_lipschitz(prob.spec, prob.obstacle, prob.xi, prob.band, lattice)
    elif cfg.method == "picard":
        surface, run = solve_picard(
            prob.spec, prob.obstacle, prob.xi, prob.band, lattice, cfg.stop_tol, cfg.max_iter,
            cfg.alpha, track_norms=False,
        )
        extra["iterations"] = len(run.iterates)
        extra["final_delta"] = run.deltas[-1]
    else:
        surface, run = solve_penalized(
            prob.spec, prob.obstacle, prob.xi, prob.band, lattice, cfg.schedule, cfg.alpha,
            max_workers=threads, track_norms=False,
        )
        extra["final_rate"] = run.schedule[-1]
        extra["final_gap"] = run.gaps[-1]
    return prob, surface, extra


def _surface_rows(surface):
    lat = surface.lattice
    x = lat.x
    n = lat.n_steps
    for k in range(n + 1):
        pol = surface.policy[k] if k < n else None
        for j in range(lat.n_nodes):
            yield (
                k, j, float(x[j]), float(surface.Y[k, j]), float(surface.Z[k, j]),
                float(surface.lift[k, j]), None if pol is None else float(pol[j]),
            )


def cmd_solve(cfg: RunConfig, out: str, threads: int = 1) -> int:
    lattice = cfg.lattice
    prob, surface, extra = _solve(cfg, lattice, threads)
    norms = apriori_norms(surface, cfg.alpha)
    comp = martingale_condition_check(surface)
    slack = float(np.min(surface.Y - surface.psi_values))
    summary = [
        ("method", cfg.method),
        ("generator", prob.spec.label),
        ("obstacle", prob.obstacle.label),
        ("n_steps", lattice.n_steps),
        ("n_nodes", lattice.n_nodes),
        ("dx", lattice.dx),
        ("y0", surface.y0),
        ("Y_sup_norm", norms.Y_sup_norm),
        ("Z_l2_norm", norms.Z_l2_norm),
        ("A_terminal_norm", norms.A_terminal_norm),
        ("alpha", cfg.alpha),
        ("complementarity_max", comp.max_complementarity_violation),
        ("complementarity_pass", comp.passed),
        ("min_obstacle_slack", slack),
        *extra.items(),
    ]
    if prob.is_put and cfg.terminal == "put" and prob.band.collapsed:
        price = crr_price(
            AmericanPutSpec(cfg.spot, cfg.strike, cfg.rate, cfg.sigma_high, cfg.horizon, lattice.n_steps)
        )
        summary += [("oracle_price", price), ("rel_error", abs(surface.y0 - price) / price)]
    files = {
        "surface.csv": csv_text(SURFACE_HEADER, _surface_rows(surface)),
        "summary.csv": csv_text(("key", "value"), summary),
    }
    _write_all(out, files)
    return EXIT_CODES["ok"]


def _log_slope(xs, ys):
    pts = [(math.log(x), math.log(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pts) < 2:
        return None
    a = np.array(pts)
    return float(np.polyfit(a[:, 0], a[:, 1], 1)[0])


def cmd_study(cfg: RunConfig, out: str, threads: int = 1) -> int:
    rows = []
    series = {}
    if cfg.kind == "penalization":
        prob = build_problem(cfg)
        lattice = cfg.lattice
        _, run = solve_penalized(
            prob.spec, prob.obstacle, prob.xi, prob.band, lattice, cfg.schedule, cfg.alpha,
            max_workers=threads,
        )
        prev = None
        for rate, surf, gap, nr in zip(run.schedule, run.surfaces, run.gaps, run.norms):
            delta = None if prev is None else float(np.max(np.abs(surf.Y - prev)))
            rows.append(("penalization", rate, surf.y0, gap, delta, *nr.as_tuple(), None))
            prev = surf.Y
        series["gap"] = (list(run.schedule), run.gaps)
        series["delta"] = ([r[1] for r in rows[1:]], [r[4] for r in rows[1:]])
        xlabel = "penalty rate n"
    elif cfg.kind == "picard":
        prob = build_problem(cfg)
        _, run = solve_picard(
            prob.spec, prob.obstacle, prob.xi, prob.band, cfg.lattice, cfg.stop_tol, cfg.max_iter, cfg.alpha
        )
        for i, delta in enumerate(run.deltas, start=1):
            it = run.iterates[i]
            rows.append(("picard", i, it.y0, None, delta, *run.norm_trace[i].as_tuple(), None))
        series["delta"] = (list(range(1, len(run.deltas) + 1)), run.deltas)
        xlabel = "iteration"
    else:
        steps = sorted(cfg.steps)

        def one(n):
            return _solve(cfg, cfg.lattice_for(n), 1)[1].y0

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                y0s = list(pool.map(one, steps))
        else:
            y0s = [one(n) for n in steps]
        deltas = [None] + [abs(b - a) for a, b in zip(y0s, y0s[1:])]
        for i, (n, y0) in enumerate(zip(steps, y0s)):
            order = None
            if i >= 2 and deltas[i] > 0 and deltas[i - 1] > 0:
                order = math.log(deltas[i - 1] / deltas[i]) / math.log(steps[i] / steps[i - 1])
            rows.append(("refinement", n, y0, None, deltas[i], None, None, None, order))
        series["|y0 difference|"] = (
            [cfg.horizon / n for n in steps[1:]],
            deltas[1:],
        )
        xlabel = "dt"
    svg = loglog_svg(series, f"{cfg.kind} study", xlabel, "size")
    _write_all(out, {"study.csv": csv_text(STUDY_HEADER, rows), "study.svg": svg})
    return EXIT_CODES["ok"]


def cmd_check(cfg: RunConfig, out: str, threads: int = 1) -> int:
    rows = run_suite(cfg.check_names(), cfg.divergence_list())
    table = [(r.name, r.passed, r.lhs, r.rhs, r.detail) for r in rows]
    _write_all(out, {"checks.csv": csv_text(("name", "passed", "lhs", "rhs", "detail"), table)})
    failed = [r.name for r in rows if not r.passed]
    if failed:
        _report_error("check", "CheckFailure", f"failed checks: {', '.join(failed)}")
        return EXIT_CODES["check"]
    return EXIT_CODES["ok"]


def _write_all(out: str, files: dict) -> None:
    os.makedirs(out, exist_ok=True)
    for name in sorted(files):
        write_atomic(os.path.join(out, name), files[name])


def _report_error(kind: str, name: str, message: str) -> None:
    line = {"error": kind, "exit_code": EXIT_CODES[kind], "type": name, "message": message}
    print(json.dumps(line, sort_keys=True), file=sys.stderr)


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reflected-gbsde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="workers for independent schedule points")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; map its exit 2 to the config code
        return EXIT_CODES["config"] if exc.code else EXIT_CODES["ok"]
    try:
        if args.threads < 1:
            raise PreconditionError("--threads must be >= 1")
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args.out, args.threads)
    except ConvergenceFailure as exc:
        _report_error("convergence", type(exc).__name__, str(exc))
        return EXIT_CODES["convergence"]
    except NumericalFailure as exc:
        _report_error("numerical", type(exc).__name__, str(exc))
        return EXIT_CODES["numerical"]
    except GBSDEError as exc:
        _report_error("config", type(exc).__name__, str(exc))
        return EXIT_CODES["config"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
