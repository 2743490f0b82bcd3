"""Command-line front end.

Exit codes: 0 all checks pass, 1 theorem or bound violation, 2 solver
failure, 3 usage or configuration error.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .fileio import read_matrix, read_vector, write_vector
from .harness import (
    ConfigError,
    TrialConfig,
    report_csv,
    run_experiment,
    trial_seed,
)
from .rwp import certify
from .solvers import (
    DANTZIG,
    LASSO,
    SolverError,
    SolverOptions,
    oracle_dantzig_lp,
    solve_dantzig,
    solve_lasso,
    soft_threshold,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_SOLVER = 2
EXIT_USAGE = 3

SEED_ENV = "RWIDTH_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--seed", type=int, help=f"master seed (falls back to ${SEED_ENV})")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.add_argument("--tol", type=float, help="solver KKT tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rwidth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rwidth {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("certify", help="robust width certificate for a matrix")
    _add_common(p)
    p.add_argument("--matrix", type=Path, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.02)
    p.add_argument("--restarts", type=int, default=20)

    p = sub.add_parser("solve", help="solve a Lasso or Dantzig instance")
    _add_common(p)
    p.add_argument("--matrix", type=Path, required=True)
    p.add_argument("--y", type=Path, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--model", choices=(LASSO, DANTZIG), default=LASSO)

    p = sub.add_parser("verify", help="run seeded trials of one configuration")
    _add_common(p)
    p.add_argument("--timing", action="store_true", help="add wall_ms to report.csv")

    p = sub.add_parser("sweep", help="run trials over a parameter grid")
    _add_common(p)
    p.add_argument("--timing", action="store_true", help="add wall_ms to report.csv")

    p = sub.add_parser("oracle", help="cross-check solvers against closed forms and the LP oracle")
    _add_common(p)
    p.add_argument("--trials", type=int, default=20)
    return parser


def resolve_seed(cli_seed, config_seed=None) -> int:
    if cli_seed is not None:
        seed = cli_seed
    elif os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"${SEED_ENV} is not an integer: {os.environ[SEED_ENV]!r}") from None
    elif config_seed is not None:
        seed = config_seed
    else:
        seed = 0
    if not 0 <= seed < 1 << 64:
        raise UsageError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def load_json(path: Path):
    if path is None:
        raise UsageError("--config is required")
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _split_trials(doc: dict, where: str) -> tuple[dict, int]:
    if not isinstance(doc, dict):
        raise ConfigError(where, "expected a JSON object")
    doc = dict(doc)
    trials = doc.pop("trials", 1)
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise ConfigError("trials", f"expected a positive integer, got {trials!r}")
    return doc, trials


def parse_verify_config(doc) -> tuple[TrialConfig, int]:
    """A verify config is a TrialConfig object plus an optional ``trials`` count."""
    body, trials = _split_trials(doc, "<root>")
    return TrialConfig.from_dict(body), trials


def parse_sweep_config(doc) -> list[tuple[TrialConfig, int]]:
    """``{"base": {...}, "grid": {field: [values]}, "trials": n}``; grid is a product."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    unknown = sorted(set(doc) - {"base", "grid", "trials"})
    if unknown:
        raise ConfigError(unknown[0], "unknown sweep field")
    base = doc.get("base", {})
    grid = doc.get("grid", {})
    if not isinstance(base, dict):
        raise ConfigError("base", "expected an object")
    if not isinstance(grid, dict) or any(not isinstance(v, list) or not v for v in grid.values()):
        raise ConfigError("grid", "expected an object mapping field names to nonempty lists")
    _, trials = _split_trials({"trials": doc.get("trials", 1)}, "trials")
    names = sorted(grid)
    out = []
    for values in itertools.product(*(grid[n] for n in names)):
        point = dict(base)
        point.update(zip(names, values))
        out.append((TrialConfig.from_dict(point), trials))
    return out


def _with_tol(cfg: TrialConfig, tol) -> TrialConfig:
    if tol is None:
        return cfg
    return replace(cfg, solver=replace(cfg.solver, tol_kkt=tol))


def _write_outputs(out: Path | None, files: dict[str, str], manifest: dict) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    manifest["outputs"] = sorted(str(out / n) for n in [*files, "manifest.json"])
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _manifest(command: str, config, seed: int, **extra) -> dict:
    d = {"tool_version": __version__, "subcommand": command, "config": config, "seed": seed}
    d.update(extra)
    return d


def _exit_for(summary) -> int:
    if summary.n_theorem_violations or summary.n_inadmissible:
        return EXIT_VIOLATION
    if summary.n_solver_failures:
        return EXIT_SOLVER
    return EXIT_OK


def _run_trials(args, groups: list[tuple[TrialConfig, int]], seed: int, config_doc) -> int:
    configs = []
    for cfg, trials in groups:
        cfg = _with_tol(cfg, args.tol)
        for _ in range(trials):
            configs.append(replace(cfg, seed=trial_seed(seed, len(configs))))
    t0 = time.perf_counter()
    summary = run_experiment(configs, parallelism=args.parallel)
    elapsed = time.perf_counter() - t0
    summary_doc = summary.to_dict(seed=seed)
    files = {
        "report.csv": report_csv(summary.records, with_timing=args.timing),
        "summary.json": json.dumps(summary_doc, indent=2, sort_keys=True) + "\n",
    }
    manifest = _manifest(args.command, config_doc, seed, n_trials=len(configs), wall_seconds=round(elapsed, 3))
    _write_outputs(args.out, files, manifest)
    print(json.dumps(summary_doc, sort_keys=True))
    return _exit_for(summary)


def cmd_verify(args) -> int:
    doc = load_json(args.config)
    cfg, trials = parse_verify_config(doc)
    seed = resolve_seed(args.seed, cfg.seed if "seed" in doc else None)
    cfg = replace(_with_tol(cfg, args.tol), seed=seed)
    resolved = dict(cfg.to_dict(), trials=trials)
    return _run_trials(args, [(cfg, trials)], seed, resolved)


def cmd_sweep(args) -> int:
    doc = load_json(args.config)
    groups = parse_sweep_config(doc)
    seed = resolve_seed(args.seed)
    return _run_trials(args, groups, seed, doc)


def _load_array(path: Path, reader):
    try:
        return reader(path)
    except FileNotFoundError:
        raise UsageError(f"file not found: {path}") from None
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_certify(args) -> int:
    A = _load_array(args.matrix, read_matrix)
    if not args.rho > 0 or not 0 < args.delta < 1:
        raise UsageError("--rho must be positive and --delta must lie in (0, 1)")
    seed = resolve_seed(args.seed)
    cert = certify(A, args.rho, args.delta, restarts=args.restarts, seed=seed)
    doc = dict(cert.to_dict(), tool_version=__version__, seed=seed)
    config = {"matrix": str(args.matrix), "rho": args.rho, "delta": args.delta, "restarts": args.restarts}
    _write_outputs(args.out, {"certificate.json": json.dumps(doc, indent=2, sort_keys=True) + "\n"},
                   _manifest("certify", config, seed))
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_solve(args) -> int:
    A = _load_array(args.matrix, read_matrix)
    y = _load_array(args.y, read_vector)
    if y.size != A.shape[0]:
        raise UsageError(f"y has length {y.size}, matrix has {A.shape[0]} rows")
    if not args.lam > 0:
        raise UsageError("--lambda must be positive")
    opts = SolverOptions() if args.tol is None else SolverOptions(tol_kkt=args.tol)
    seed = resolve_seed(args.seed)
    solve = solve_lasso if args.model == LASSO else solve_dantzig
    config = {"matrix": str(args.matrix), "y": str(args.y), "lambda": args.lam, "model": args.model,
              "tol_kkt": opts.tol_kkt}
    try:
        x, rep = solve(A, y, args.lam, opts, full_output=True)
    except SolverError as exc:
        print(json.dumps({"error": str(exc), "residual": exc.residual}), file=sys.stderr)
        return EXIT_SOLVER
    doc = {
        "tool_version": __version__,
        "seed": seed,
        "model": rep.model,
        "x": [float(v) for v in x],
        "dual_feas_margin": rep.dual_feas_margin,
        "support_stationarity": rep.support_stationarity,
        "objective": rep.objective,
        "iterations": rep.iterations,
    }
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        write_vector(args.out / "solution.csv", x)
    _write_outputs(args.out, {"report.json": json.dumps(doc, indent=2, sort_keys=True) + "\n"},
                   _manifest("solve", config, seed))
    if args.out is not None:
        m = json.loads((args.out / "manifest.json").read_text())
        m["outputs"] = sorted(m["outputs"] + [str(args.out / "solution.csv")])
        (args.out / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def oracle_checks(trials: int, seed: int, opts: SolverOptions | None = None) -> dict:
    """Lasso against its orthogonal closed form, Dantzig against the LP oracle."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    lasso_err = dantzig_err = dantzig_feas = 0.0
    failures = 0
    for _ in range(trials):
        n = int(rng.integers(2, 17))
        Q, R = np.linalg.qr(rng.standard_normal((n, n)))
        Q = Q * np.sign(np.diag(R))
        y = rng.standard_normal(n) * 2.0
        lam = float(rng.uniform(0.05, 1.5))
        try:
            x = solve_lasso(Q, y, lam, opts)
        except SolverError:
            failures += 1
            continue
        lasso_err = max(lasso_err, float(np.linalg.norm(x - soft_threshold(Q.T @ y, lam))))

        P = rng.standard_normal((4, 6))
        y = rng.standard_normal(4) * 2.0
        lam = float(rng.uniform(0.05, 1.0))
        try:
            xd = solve_dantzig(P, y, lam, opts)
        except SolverError:
            failures += 1
            continue
        xo = oracle_dantzig_lp(P, y, lam)
        dantzig_err = max(dantzig_err, abs(float(np.abs(xd).sum() - np.abs(xo).sum())))
        viol = float(np.max(np.abs(P.T @ (P @ xd - y)))) - lam
        dantzig_feas = max(dantzig_feas, viol / lam)
    return {
        "tool_version": __version__,
        "seed": seed,
        "trials": trials,
        "solver_failures": failures,
        "lasso_max_error": lasso_err,
        "dantzig_max_objective_gap": dantzig_err,
        "dantzig_max_relative_violation": dantzig_feas,
        "pass": failures == 0 and lasso_err <= 1e-6 and dantzig_err <= 1e-6 and dantzig_feas <= 1e-8,
    }


def cmd_oracle(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    seed = resolve_seed(args.seed)
    opts = SolverOptions() if args.tol is None else SolverOptions(tol_kkt=args.tol)
    doc = oracle_checks(args.trials, seed, opts)
    _write_outputs(args.out, {"summary.json": json.dumps(doc, indent=2, sort_keys=True) + "\n"},
                   _manifest("oracle", {"trials": args.trials, "tol_kkt": opts.tol_kkt}, seed))
    print(json.dumps(doc, sort_keys=True))
    if doc["solver_failures"]:
        return EXIT_SOLVER
    return EXIT_OK if doc["pass"] else EXIT_VIOLATION


COMMANDS = {
    "certify": cmd_certify,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        if args.parallel < 1:
            raise UsageError("--parallel must be >= 1")
        if args.tol is not None and not 0 < args.tol < 1:
            raise UsageError("--tol must lie in (0, 1)")
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"rwidth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
