"""Command line driver.

    mftc solve <config.ini> [--grid M] [--tol x] [--force-inadmissible] [--out dir]
    mftc audit <suite> --seed N [--config config.ini] [--out dir]

Exit codes: 0 success, 1 audit failures, 2 bad config or arguments,
3 inadmissible instance, 4 fixed-point iteration did not converge.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plotting
from . import riccati_quadratic as riccati
from .bvp_solver import (NonConvergenceError, SolverConfig, admissibility_check, hjb_identity_residual,
                         solve_fixed_point, time_derivative_value, value_function, value_path)
from .config import ConfigError, load_config
from .measure_space import ParticleEnsemble, TimeGrid
from .verification import SUITES, AuditReport, estimate_checks, run_suite

log = logging.getLogger("mftc")

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INADMISSIBLE, EXIT_NONCONVERGED = 0, 1, 2, 3, 4


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def run_solve(config_path, grid=None, tol=None, force=False, out=None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if grid is not None:
        if grid < 2:
            print("config error: --grid: must be >= 2", file=sys.stderr)
            return EXIT_PARSE
        cfg = replace(cfg, M=grid)
    if tol is not None:
        cfg = replace(cfg, tol=tol)
    out_dir = Path(out) if out is not None else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    adm = admissibility_check((cfg.running, cfg.terminal), cfg.lam, cfg.t, cfg.T)
    if not adm.admissible and not force:
        print(f"inadmissible: margin lambda - c tau (1 + tau) = {adm.margin:.6g} <= 0 "
              f"(use --force-inadmissible to solve anyway)", file=sys.stderr)
        return EXIT_INADMISSIBLE

    scfg = SolverConfig(TimeGrid(cfg.t, cfg.T, cfg.M), cfg.tol, cfg.max_iter)
    try:
        b = solve_fixed_point(cfg.running, cfg.terminal, cfg.ensemble, cfg.lam, scfg, force=force)
    except NonConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED

    b.to_csv(out_dir / "trajectory.csv")
    X = cfg.ensemble
    V = value_function(b, cfg.running, cfg.terminal)
    ratios = b.ratios
    summary = [
        ("value", V),
        ("time_derivative", time_derivative_value(b, cfg.running)),
        ("hjb_identity_residual", hjb_identity_residual(b, cfg.running)),
        ("iterations", b.iterations),
        ("final_residual", b.final_residual),
        ("converged", b.converged),
        ("lipschitz_constant", b.lipschitz),
        ("margin", adm.margin),
        ("margin_full_horizon", adm.margin_full),
        ("contraction_bound", adm.contraction),
        ("max_observed_ratio", float(np.max(ratios)) if ratios.size else 0.0),
    ]
    tables = None
    if cfg.quadratic is not None:
        try:
            tables = riccati.solve_riccati(cfg.quadratic, b.grid)
        except riccati.RiccatiBlowUpError as exc:
            log.warning("closed form unavailable: %s", exc)
    if tables is not None:
        Vr = riccati.value_closed_form(tables, X, 0)
        grad_r = X.points @ tables.P[0].T + tables.Sigma[0] @ X.points.mean(axis=0)
        summary += [("value_riccati", Vr),
                    ("value_deviation", abs(V - Vr)),
                    ("gradient_deviation", float(np.max(np.abs(b.Z[0] - grad_r))))]
        tables.to_csv(out_dir / "riccati.csv")
    _write_rows(out_dir / "summary.csv", ["quantity", "value"], [(k, _fmt(v)) for k, v in summary])

    n = X.n
    _write_rows(out_dir / "gradient.csv",
                ["particle_index"] + [f"x_{j}" for j in range(n)] + [f"grad_{j}" for j in range(n)],
                [[i] + [_fmt(v) for v in X.points[i]] + [_fmt(v) for v in b.Z[0, i]] for i in range(X.N)])
    vp = value_path(b, cfg.running, cfg.terminal)
    _write_rows(out_dir / "value_path.csv", ["node_index", "time", "value"],
                [(k, _fmt(s), _fmt(v)) for k, (s, v) in enumerate(zip(b.grid.nodes, vp))])

    if cfg.plots:
        plotting.plot_value(out_dir / "value_path.csv", out_dir / "value.svg")
        if tables is not None:
            plotting.plot_riccati(out_dir / "riccati.csv", out_dir / "riccati.svg")
        if n == 1:
            plotting.plot_trajectories(out_dir / "trajectory.csv", out_dir / "trajectories.svg")

    print(f"V = {V:.10g}  iterations = {b.iterations}  residual = {b.final_residual:.3e}  -> {out_dir}")
    if not b.converged:
        print(f"no convergence: residual {b.final_residual:.3e} after {b.iterations} iterations",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def run_audit(suite: str, seed: int, config_path=None, out=None, force=False) -> int:
    if suite != "all" and suite not in SUITES:
        print(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}", file=sys.stderr)
        return EXIT_PARSE
    extra = None
    if config_path is not None:
        try:
            cfg = load_config(config_path)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        adm = admissibility_check((cfg.running, cfg.terminal), cfg.lam, cfg.t, cfg.T)
        if not adm.admissible and (suite in ("estimates", "all") or not force):
            # the a-priori bounds have a non-positive denominator; forcing cannot help
            print(f"inadmissible config instance (margin {adm.margin:.6g}); refusing to audit",
                  file=sys.stderr)
            return EXIT_INADMISSIBLE
        if cfg.quadratic is None:
            print("config error: model.kind: config instances are audited for quadratic models only",
                  file=sys.stderr)
            return EXIT_PARSE
        extra = cfg

    report = run_suite(suite, seed)
    if extra is not None and suite in ("estimates", "all"):
        sub = AuditReport("estimates", seed)
        rng = np.random.default_rng(seed)
        X1 = extra.ensemble
        X2 = ParticleEnsemble(X1.points + 0.1 * rng.standard_normal(X1.points.shape))
        estimate_checks(sub, extra.quadratic, X1, X2, extra.t, extra.M, rng, f"config {config_path}")
        prefix = "estimates." if suite == "all" else ""
        for c in sub.checks:
            report.checks.append(replace(c, name=prefix + c.name))

    out_dir = Path(out) if out is not None else Path("audit_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"audit_{suite}_seed{seed}"
    report.to_csv(out_dir / f"{stem}.csv")
    text = report.summary()
    (out_dir / f"{stem}.txt").write_text(text)
    print(text, end="")
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mftc", description="Mean-field-type control solver and audits")
    ap.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one configured instance")
    s.add_argument("config")
    s.add_argument("--grid", type=int, help="number of time intervals M")
    s.add_argument("--tol", type=float, help="fixed-point tolerance")
    s.add_argument("--force-inadmissible", action="store_true", help="solve even if the margin is not positive")
    s.add_argument("--out", help="output directory (overrides outputs.dir)")

    a = sub.add_parser("audit", help="run a verification suite")
    a.add_argument("suite", help=f"one of {', '.join(SUITES + ('all',))}")
    a.add_argument("--seed", type=int, default=7)
    a.add_argument("--config", help="add this instance to the estimate audit")
    a.add_argument("--force-inadmissible", action="store_true")
    a.add_argument("--out", help="report directory (default audit_out)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        return run_solve(args.config, args.grid, args.tol, args.force_inadmissible, args.out)
    return run_audit(args.suite, args.seed, args.config, args.out, args.force_inadmissible)


if __name__ == "__main__":
    sys.exit(main())
