"""Command-line entry point ``sbp-ins``.

Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 a comparison
or verification threshold was missed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path


EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_THRESHOLD = 0, 1, 2, 3

log = logging.getLogger("sbp_ins.cli")


def _cmd_verify_mms(args) -> int:
    from .mms import check_table, convergence_table, format_table, run_mms
    from .timestep import NewtonSettings

    newton = NewtonSettings(reuse_jacobian=True)
    if args.full_table:
        plan = [(k, n) for k in (1, 2, 3, 4) for n in (13, 25, 37, 49)]
        t_end = 0.4
    else:
        plan = [(k, n) for k in (1, 2, 3, 4) for n in (13, 25)] + [(4, 37), (4, 49)]
        t_end = 0.1
    if args.degrees:
        plan = [(k, n) for k, n in plan if k in args.degrees]
    runs = []
    for k, n in plan:
        runs.append(run_mms(k, n, t_end=t_end, dt=args.dt, newton=newton))
        log.info("k=%d %dx%d: e_u=%.4e e_v=%.4e", k, n, n, runs[-1].error_u, runs[-1].error_v)
    rows = convergence_table(runs)
    text = format_table(rows)
    if args.output:
        Path(args.output).write_text(text)
    sys.stdout.write(text)
    if args.full_table:
        problems = check_table(rows, order_tol=0.3, error_rtol=0.2)
    else:
        problems = check_table([r for r in rows if r["nodes"] in (13, 25)], order_tol=0.5)
    for p in problems:
        print(f"MISMATCH {p}", file=sys.stderr)
    return EXIT_THRESHOLD if problems else EXIT_OK


def _cmd_run(args) -> int:
    from .cases import load_config, run_case

    cfg = load_config(args.config, full_scale=args.full_scale)
    out = Path(args.output) if args.output else Path("runs") / Path(args.config).stem
    art = run_case(cfg, out)
    print(f"wrote {out}")
    for k, v in art.metrics.items():
        if k not in ("comparisons", "mms"):
            print(f"  {k}: {v}")
    failed = [c for c in art.comparisons if not c.passed(cfg.comparison_threshold)]
    for c in art.comparisons:
        print(f"  {'FAIL' if c in failed else 'ok'}  {c.summary()}")
    if cfg.case_kind == "mms":
        from .mms import check_table, format_table

        sys.stdout.write(format_table(art.metrics["mms"]))
        problems = check_table(art.metrics["mms"], order_tol=0.5)
        for p in problems:
            print(f"MISMATCH {p}", file=sys.stderr)
        return EXIT_THRESHOLD if problems else EXIT_OK
    if cfg.end_time is None and not art.result.steady:
        print(f"steady state not reached within {cfg.max_steps} steps", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_THRESHOLD if failed else EXIT_OK


def _cmd_compare(args) -> int:
    from .cases import _resolve_reference, load_run
    from .fields import extract_line_profile
    from .reference import compare_to_reference, load_reference

    cfg, mesh, W = load_run(args.run)
    ref = load_reference(_resolve_reference(args.reference))
    prof = extract_line_profile(W, mesh, ref.axis, ref.coordinate, ref.quantity, points=ref.abscissa)
    rep = compare_to_reference(prof, ref)
    threshold = args.threshold if args.threshold is not None else cfg.comparison_threshold
    w = csv.writer(sys.stdout)
    w.writerow(["abscissa", "computed", "reference", "abs_deviation"])
    for row in zip(rep.abscissa, rep.computed, rep.reference, rep.deviations):
        w.writerow([f"{v:.6g}" for v in row])
    ok = rep.passed(threshold)
    print(f"{'PASS' if ok else 'FAIL'} {rep.summary()} (threshold {threshold:g})", file=sys.stderr)
    return EXIT_OK if ok else EXIT_THRESHOLD


def _cmd_dump_operators(args) -> int:
    from .basis import ReferenceElement
    from .mesh import cosine_stretched_edges, uniform_edges
    from .sbp import metric_scaled_operators, operator_triplets

    if args.elements < 1:
        raise ValueError(f"--elements must be at least 1, got {args.elements}")
    ref = ReferenceElement.from_degree(args.degree)
    edges = cosine_stretched_edges(args.elements + 1) if args.stretched else uniform_edges(args.elements, 0.0, 1.0)
    g = metric_scaled_operators(ref, edges)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["operator", "row", "col", "value"])
        for name, r, c, v in operator_triplets(g):
            w.writerow([name, r, c, repr(v)])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbp-ins", description="SBP-SAT continuous Galerkin incompressible flow solver")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("verify-mms", help="manufactured-solution convergence table")
    m.add_argument("--full-table", action="store_true", help="all degrees on 13, 25, 37, 49 nodes to t=0.4 (slow)")
    m.add_argument("--degrees", type=int, nargs="+", help="restrict to these degrees")
    m.add_argument("--dt", type=float, default=6.4e-5)
    m.add_argument("--output", help="also write the CSV table here")
    m.set_defaults(func=_cmd_verify_mms)

    r = sub.add_parser("run", help="run a case from a key = value config file")
    r.add_argument("--config", required=True)
    r.add_argument("--paper-scale", dest="full_scale", action="store_true", help="start from the full-resolution preset")
    r.add_argument("--output", help="run directory (default runs/<config name>)")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="compare a finished run with a reference profile")
    c.add_argument("--run", required=True, help="run directory")
    c.add_argument("--reference", required=True, help="reference CSV path or shipped name")
    c.add_argument("--threshold", type=float, help="max abs deviation allowed (default from the run config)")
    c.set_defaults(func=_cmd_compare)

    d = sub.add_parser("dump-operators", help="1D operators as (operator, row, col, value) CSV")
    d.add_argument("--degree", type=int, required=True)
    d.add_argument("--elements", type=int, required=True)
    d.add_argument("--stretched", action="store_true", help="cosine-stretched element edges on [0, 1]")
    d.add_argument("--output")
    d.set_defaults(func=_cmd_dump_operators)
    return p


def main(argv=None) -> int:
    from .cases import ConfigError
    from .reference import ReferenceFormatError
    from .timestep import SolverError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, ReferenceFormatError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
