"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 solver non-convergence,
4 property failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import BUILTINS, ConfigError, load_config
from .experiments import convergence_study, solve_scenario, write_artifacts, write_convergence
from .solvers import NonContractionError, NonConvergenceError
from .verify import SUITES, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_PROPERTY = 0, 2, 3, 4
OUT_ENV = "BSEELAB_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _default_out(sub: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "bseelab_out")) / sub


def _seed(value: str) -> int:
    v = int(value)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _steps(value: str) -> list:
    try:
        steps = [int(s) for s in value.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {value!r}") from None
    if not steps or any(n < 1 for n in steps):
        raise argparse.ArgumentTypeError("steps must be positive integers")
    return steps


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bseelab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one scenario and write summary.csv / manifest.json")
    s.add_argument("--config", required=True, help=f"INI file or builtin name ({', '.join(BUILTINS)})")
    s.add_argument("--seed", type=_seed, help="override model.seed")
    s.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV}/solve or ./bseelab_out/solve)")
    s.add_argument("--dump-nodes", action="store_true", help="also write nodes.npz with U, V, W per level")

    v = sub.add_parser("verify", help="run property suites and print a JSON report")
    v.add_argument("--suite", required=True, help=f"one of all, {', '.join(SUITES)}")
    v.add_argument("--seed", type=_seed, default=0)
    v.add_argument("--out", type=Path, help="also write the report to this directory")

    c = sub.add_parser("convergence", help="errors against the closed form for several N")
    c.add_argument("--config", required=True)
    c.add_argument("--steps", type=_steps, default=[8, 16, 32])
    c.add_argument("--model", choices=("tree", "lattice", "paths"), help="override model.kind")
    c.add_argument("--out", type=Path)
    return p


def cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = solve_scenario(cfg)
    except (NonContractionError, NonConvergenceError) as exc:
        print(f"solver did not converge: {exc} (theta={exc.theta:.6g})", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    out = args.out or _default_out("solve")
    man = write_artifacts(result, out, args.dump_nodes)
    line = f"{cfg.name}: residual={result.residual:.3e} tol={cfg.tol:g} iterations={result.solution.iterations}"
    if man["guard_theta"] is not None:
        line += f" theta={man['guard_theta']:.4g}"
    if result.closed_form_error is not None:
        line += f" closed_form_error={result.closed_form_error:.3e}"
    print(line)
    print(f"wrote {out}")
    if not result.converged:
        print(f"residual {result.residual:.3e} exceeds tol {cfg.tol:g}"
              + (f" (theta={man['guard_theta']:.4g})" if man["guard_theta"] is not None else ""), file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite != "all" and args.suite not in SUITES:
        print(f"config error: unknown suite {args.suite!r}; choose from all, {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suites(args.suite, args.seed)
    report = {"suite": args.suite, "seed": args.seed, "passed": all(r.passed for r in results),
              "properties": [r.as_dict() for r in results]}
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "verify.json").write_text(text + "\n")
    return EXIT_OK if report["passed"] else EXIT_PROPERTY


def cmd_convergence(args) -> int:
    try:
        cfg = load_config(args.config)
        rows = convergence_study(cfg, args.steps, args.model)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if isinstance(exc, NonContractionError):
            print(f"solver did not converge: {exc}", file=sys.stderr)
            return EXIT_NONCONVERGENCE
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    out = args.out or _default_out("convergence")
    write_convergence(rows, out)
    print((out / "convergence.csv").read_text(), end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return {"solve": cmd_solve, "verify": cmd_verify, "convergence": cmd_convergence}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
