"""Command-line surface: validate, run, and export scenarios.

Exit codes: 0 success, 1 failed validation or a safety-threshold violation
during a run, 2 unparseable input (bad file, unknown key, unknown kind).
"""

from __future__ import annotations

import argparse
import sys
import time
from collections import Counter
from pathlib import Path

from . import scenario as scenario_mod
from . import sim, traces
from .graph import analyze, validate_gamma
from .reference_model import SpectralError, build_xi, spectral_report
from .scenario import ConfigError, Scenario

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _load(args) -> Scenario:
    return scenario_mod.load(args.scenario, overrides=args.override)


def _check_report(scn: Scenario, quiet: bool) -> bool:
    """Print the validation report; True when every condition passes."""
    issues = scenario_mod.problems(scn)
    analysis = analyze(scn.graph)
    gamma = validate_gamma(analysis, scn.control.gamma, scn.control.h)
    xi = build_xi(analysis, scn.control.gamma, scn.control.h)
    residual = xi.row_sum_residual()
    ok = not issues and residual < 1e-10
    lines = [
        f"scenario: {scn.name} ({scn.n} vehicles, {scn.duration} steps)",
        f"spanning tree: {'yes' if analysis.has_spanning_tree else 'NO'}",
        f"gain check: {gamma.describe()}",
        f"transition-matrix row-sum residual: {residual:.3e}",
    ]
    try:
        spectral = spectral_report(xi)
        lines.append(
            "spectrum: unit eigenvalue multiplicity "
            f"{spectral.eigenvalue_one_multiplicity}, "
            f"max other modulus {spectral.max_other_modulus:.6f}"
        )
        ok = ok and spectral.converges()
    except SpectralError as exc:
        lines.append(f"spectrum: FAILED ({exc})")
        ok = False
    for issue in issues:
        lines.append(f"problem: {issue}")
    lines.append("check: PASS" if ok else "check: FAIL")
    if not quiet:
        print("\n".join(lines))
    return ok


def cmd_check(args) -> int:
    try:
        scn = _load(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if _check_report(scn, args.quiet) else EXIT_FAIL


def cmd_run(args) -> int:
    try:
        scn = _load(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    passed = _check_report(scn, args.quiet)
    if not passed and not args.force:
        if scn.strict:
            print("validation failed (use --force to run anyway)", file=sys.stderr)
            return EXIT_FAIL
        if not args.quiet:
            print("validation failed; continuing (strict=false)")
    started = time.perf_counter()
    result = sim.run(scn, validate=False)
    elapsed = time.perf_counter() - started
    paths = traces.write_run_outputs(result, args.out)
    metrics = result.metrics
    min_pairwise = float(metrics.min_pairwise.min())
    min_obstacle = float(metrics.min_obstacle.min())
    statuses = Counter(
        rec.solver_status for trace in result.steps for rec in trace.vehicles
    )
    if not args.quiet:
        histogram = ", ".join(f"{k}={v}" for k, v in sorted(statuses.items()))
        print(f"wrote {paths['trace']}, {paths['metrics']}, {paths['header']}")
        print(
            f"final eps_f: {metrics.formation_error[-1]:.6f} m | "
            f"min d_ij: {min_pairwise:.4f} (threshold 1) | "
            f"min d_im: {min_obstacle:.4f} m (threshold 0)"
        )
        print(f"solver statuses: {histogram}")
        print(f"wall time: {elapsed:.2f} s ({len(result.steps)} steps)")
    if min_pairwise <= 1.0 or min_obstacle <= 0.0:
        print("safety threshold violated during the run", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_export(args) -> int:
    run_dir = Path(args.trace)
    if run_dir.is_file():
        run_dir = run_dir.parent
    if not run_dir.is_dir():
        print(f"error: no run directory at {args.trace}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out) if args.out else run_dir
    try:
        header, rows = traces.export_rows(args.kind, run_dir)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"export_{args.kind}.csv"
    text = "\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n"
    traces._write_atomic(target, text)
    if not args.quiet:
        print(f"wrote {target} ({len(rows)} rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="formflight",
        description="Distributed formation flight with consensus-driven NMPC",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-key parameter override (repeatable)",
        )
        p.add_argument("--quiet", action="store_true", help="suppress report output")

    p_check = sub.add_parser("check", help="validate a scenario's conditions")
    common(p_check)
    p_check.set_defaults(func=cmd_check)

    p_run = sub.add_parser("run", help="simulate a scenario and write traces")
    common(p_run)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument(
        "--force", action="store_true", help="run even if validation fails"
    )
    p_run.set_defaults(func=cmd_run)

    p_export = sub.add_parser("export", help="project run artifacts into flat files")
    p_export.add_argument("--trace", required=True, help="trace.csv or run directory")
    p_export.add_argument(
        "--kind",
        required=True,
        choices=["trajectory3d", "metrics", "clearances"],
        help="figure kind to export",
    )
    p_export.add_argument("--out", help="output directory (default: run directory)")
    p_export.add_argument("--quiet", action="store_true")
    p_export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
