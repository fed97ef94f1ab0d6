"""Command-line front end.

Exit codes: 0 converged (or command succeeded), 1 usage error, 2 iteration
budget exhausted, 3 numerical failure (line search, evaluation, QP, or a
failed derivative check).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import problems
from .errors import L1SqpError, ProblemParseError, UnknownProblemError
from .nlp_model import check_derivatives, document_start, load_polynomial_problem
from .qp import ActiveSetQP, model_value, oracle_solve, random_instance
from .report import SolveStatus, export
from .sqp import AFTER_UPDATE_RULES, SolverConfig, solve

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_NUMERIC = 0, 1, 2, 3

_STATUS_EXIT = {
    SolveStatus.CONVERGED: EXIT_OK,
    SolveStatus.MAX_ITERATIONS: EXIT_BUDGET,
    SolveStatus.LINE_SEARCH_FAILURE: EXIT_NUMERIC,
    SolveStatus.EVALUATION_FAILURE: EXIT_NUMERIC,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 means "budget exhausted" here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="l1sqp",
        description="Exact l1-penalty SQP solver with infeasibility detection.",
        epilog="exit codes: 0 converged, 1 usage error, 2 iteration budget exhausted, "
               "3 numerical failure",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve a registry problem or a JSON problem file")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", help="registry name (see `l1sqp list`)")
    src.add_argument("--problem-file", type=Path, help="JSON problem document")
    src.add_argument("--batch", action="store_true", help="solve every registry problem")
    s.add_argument("--rho0", type=float)
    s.add_argument("--sigma", type=float, default=0.01)
    s.add_argument("--tau", type=float, default=0.5)
    s.add_argument("--eps", type=float, default=1e-8)
    s.add_argument("--hessian", choices=("identity", "bfgs", "exact"), default="bfgs")
    s.add_argument("--hessian-after-update", choices=AFTER_UPDATE_RULES, default="steer",
                   help="what happens to B when the penalty parameter changes")
    s.add_argument("--max-inner", type=int, default=200)
    s.add_argument("--max-outer", type=int, default=100)
    s.add_argument("--x0", type=float, nargs="+", help="override the start point")
    s.add_argument("--format", choices=("table", "csv", "json"), default="table")
    s.add_argument("--check-derivatives", action="store_true",
                   help="compare derivatives with finite differences instead of solving")
    s.add_argument("--jobs", type=int, default=4, help="worker threads for --batch")

    sub.add_parser("list", help="list the registry problems")

    e = sub.add_parser("export-problem", help="print the JSON document of a registry problem")
    e.add_argument("name")

    q = sub.add_parser("gen-qp", help="generate random QP subproblem instances as JSON")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--count", type=int, default=1)
    q.add_argument("--solve", action="store_true",
                   help="attach the active-set solution and the brute-force reference value")
    return parser


def _load(args):
    """Return ``(problem, x0, rho0_default)`` for the solve subcommand."""
    if args.problem is not None:
        try:
            entry = problems.get(args.problem)
        except UnknownProblemError as exc:
            raise UsageError(str(exc)) from None
        return entry.problem, entry.x0, entry.rho0_override
    try:
        text = args.problem_file.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {args.problem_file}: {exc.strerror}") from None
    try:
        problem = load_polynomial_problem(text)
    except ProblemParseError as exc:
        raise UsageError(f"{args.problem_file}: {exc}") from None
    x0, rho0 = document_start(text)
    if x0 is None:
        x0 = np.zeros(problem.n)
    return problem, x0, rho0


def _config(args, rho0_default):
    rho0 = args.rho0 if args.rho0 is not None else (rho0_default or 1.0)
    try:
        return SolverConfig(
            rho0=rho0, sigma=args.sigma, tau=args.tau, eps=args.eps,
            hessian_mode=args.hessian, hessian_after_update=args.hessian_after_update,
            max_inner=args.max_inner, max_outer=args.max_outer,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _solve_one(problem, x0, config, fmt):
    report = solve(problem, config, x0, record_trace=False)
    text = export(report, fmt)
    if fmt == "table":
        text += f"# wall time {report.wall_time:.3f} s\n"
    return report, text


def _derivative_check(problem, x0):
    rep = check_derivatives(problem, x0)
    lines = [f"derivative check for {problem.name} at x0 (step {rep.step:g})"]
    flagged = {name for name, _, _ in rep.flagged}
    for name, err in rep.max_error.items():
        flag = "  FLAGGED" if name in flagged else ""
        lines.append(f"  {name:8s} max relative error {err:.3e}{flag}")
    lines.append("ok" if rep.ok else "FAILED")
    return "\n".join(lines) + "\n", rep.ok


def _cmd_solve(args):
    if args.batch:
        if args.x0 is not None:
            raise UsageError("--x0 cannot be combined with --batch")
        jobs = []
        for name in problems.names():
            entry = problems.get(name)
            jobs.append((entry.problem, entry.x0, _config(args, entry.rho0_override)))
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            futures = [pool.submit(_solve_one, p, x, c, args.format) for p, x, c in jobs]
            results = [f.result() for f in futures]  # registry order
        code = EXIT_OK
        for (problem, _, _), (report, text) in zip(jobs, results):
            if args.format == "table":
                sys.stdout.write(f"== {problem.name}\n")
            sys.stdout.write(text)
            code = max(code, _STATUS_EXIT[report.status])
        return code

    problem, x0, rho0_default = _load(args)
    if args.x0 is not None:
        if len(args.x0) != problem.n:
            raise UsageError(f"--x0 needs {problem.n} values, got {len(args.x0)}")
        x0 = np.array(args.x0, dtype=float)
    if args.check_derivatives:
        text, ok = _derivative_check(problem, x0)
        sys.stdout.write(text)
        return EXIT_OK if ok else EXIT_NUMERIC
    config = _config(args, rho0_default)
    report, text = _solve_one(problem, x0, config, args.format)
    sys.stdout.write(text)
    if report.message:
        print(f"l1sqp: {report.status.value}: {report.message}", file=sys.stderr)
    return _STATUS_EXIT[report.status]


def _cmd_gen_qp(args):
    rng = np.random.default_rng(args.seed)
    out = []
    for _ in range(args.count):
        inst = random_instance(rng)
        item = {key: np.asarray(getattr(inst, key)).tolist()
                for key in ("linear", "B", "h", "jac_h", "g", "jac_g")}
        if args.solve:
            sol = ActiveSetQP(warm_start=False).solve(inst)
            item["d"] = sol.d.tolist()
            item["model_value"] = model_value(inst, sol.d)
            item["reference_value"] = oracle_solve(inst).model_value
        out.append(item)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, desc in problems.list_problems():
                print(f"{name:6s} {desc}")
            return EXIT_OK
        if args.command == "export-problem":
            try:
                print(json.dumps(problems.document(args.name), indent=2))
            except UnknownProblemError as exc:
                raise UsageError(str(exc)) from None
            return EXIT_OK
        if args.command == "gen-qp":
            return _cmd_gen_qp(args)
        return _cmd_solve(args)
    except UsageError as exc:
        print(f"l1sqp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except L1SqpError as exc:
        print(f"l1sqp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None):
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
