"""Command-line entry point: ``wlab psi-check | construct | verify | scan``.

Exit codes: 0 pass, 1 check failure, 2 input error, 3 construction not found.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from . import rotational_builder as rb
from .errors import (
    GridFormatError,
    InvalidSpec,
    NoRoot,
    NotFound,
    OutOfRange,
    WlabError,
)
from .pipeline import run_verification
from .psi_model import SQRT_FAMILY, PsiSpec, check_structure
from .report import dumps
from .surface_core import TorusGrid

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_NOT_FOUND = 0, 1, 2, 3


class InputError(Exception):
    """Malformed command-line input (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _float_list(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected finite numbers, got {text!r}")
    return vals


def _bracket(text):
    vals = _float_list(text)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise argparse.ArgumentTypeError(f"bracket must be 'lo,hi' with lo < hi, got {text!r}")
    return tuple(vals)


def _add_spec_flags(p, required=False):
    p.add_argument("--a", type=float, help="SqrtFamily parameter a > 0")
    p.add_argument("--b", type=float, help="SqrtFamily parameter b >= 0")
    p.add_argument("--c", type=float, help="SqrtFamily parameter c >= 0")
    p.add_argument("--table", type=Path, help="CSV with columns s,psi,dpsi,ddpsi")


def _spec_from_args(args, fallback=None):
    if args.table is not None:
        if any(v is not None for v in (args.a, args.b, args.c)):
            raise InputError("--table excludes --a/--b/--c")
        return PsiSpec.from_csv(args.table)
    if args.a is None and fallback is not None:
        return fallback
    if args.a is None:
        raise InputError("give --a (with optional --b --c) or --table")
    return PsiSpec.sqrt_family(args.a, args.b or 0.0, args.c or 0.0)


def _spec_from_metadata(meta):
    psi = meta.get("psi") if isinstance(meta, dict) else None
    if isinstance(psi, dict) and psi.get("kind") == SQRT_FAMILY:
        return PsiSpec.sqrt_family(psi["a"], psi["b"], psi["c"])
    return None


def _emit(doc, path=None, stream=None):
    text = dumps(doc) + "\n"
    if path is not None:
        Path(path).write_text(text)
    (stream or sys.stdout).write(text)


def cmd_psi_check(args):
    spec = _spec_from_args(args)
    report = check_structure(spec, args.smax, n=args.n)
    doc = report.to_dict()
    doc["spec"] = spec.to_dict()
    _emit(doc)
    return EXIT_PASS if report.passed else EXIT_FAIL


def _default_profile_bracket(spec):
    u_eq = rb.equilibrium_u(spec)
    return 0.3 * u_eq, 0.97 * u_eq


def cmd_construct(args):
    spec = _spec_from_args(args)
    nt = args.nt or (64 if args.mode == "quick" else 128)
    nth = args.nth or nt
    try:
        if args.kind == "product":
            r, grid = rb.product_torus(spec, nt, nth)
            summary = {"kind": "product", "r": r}
        else:
            if (args.p is None) != (args.q is None):
                raise InputError("--p and --q go together")
            if args.p is None:
                lo, hi = args.bracket or _default_profile_bracket(spec)
                scan = rb.scan_closures(spec, lo, hi, n=args.scan_points)
                if not scan.candidates:
                    raise NotFound("no rational closure target within the scanned range",
                                   attained=scan.to_dict()["delta_v_range"])
                pick = min(scan.candidates, key=lambda c: (c["q"], c["p"]))
                p, q, bracket = pick["p"], pick["q"], pick["bracket"]
            else:
                if args.bracket is None:
                    raise InputError("--bracket lo,hi is required with --p/--q")
                p, q, bracket = args.p, args.q, args.bracket
            profile = rb.close_profile(spec, p, q, bracket)
            grid = rb.emit_grid(profile, nt, nth, substeps=args.substeps)
            if args.profile_out is not None:
                profile.to_csv(args.profile_out)
            summary = {"kind": "profile", "p": p, "q": q, "u_min": profile.u_start,
                       "delta_v": profile.half_period_angle}
    except (NotFound, NoRoot) as exc:
        attained = getattr(exc, "attained", None)
        diag = {"status": "not_found", "error": type(exc).__name__, "message": str(exc),
                "spec": spec.to_dict()}
        if attained is not None:
            diag["attained_delta_v"] = list(attained)
        _emit(diag, stream=sys.stderr)
        return EXIT_NOT_FOUND
    grid.save(args.out)
    summary.update(status="ok", out=str(args.out), n_t=grid.n_t, n_th=grid.n_th, spec=spec.to_dict())
    _emit(summary)
    return EXIT_PASS


def cmd_verify(args):
    grid = TorusGrid.load(args.grid)
    spec = _spec_from_args(args, fallback=_spec_from_metadata(grid.metadata))
    report, artifacts = run_verification(
        grid, spec, alpha_list=args.alpha_list, coarse=args.two_point_coarse,
        mode=args.mode, timings=args.timings,
    )
    if args.plots is not None:
        from .plotting import write_plots

        write_plots(args.plots, grid, report, artifacts)
    text = report.to_json()
    if args.report is not None:
        Path(args.report).write_text(text)
    failed = report.failed()
    summary = {"pass": report.passed, "checks": len(report.checks), "failed": failed}
    _emit(summary)
    return EXIT_PASS if report.passed else EXIT_FAIL


SCAN_COLUMNS = [
    "a", "b", "c", "structure_pass", "min_margin", "product_r", "product_lambda1",
    "product_lambda2", "delta_v_min", "delta_v_max", "closure_candidates", "first_candidate",
]


def _scan_row(a, b, c, smax, n_u):
    row = dict.fromkeys(SCAN_COLUMNS, "")
    row.update(a=a, b=b, c=c)
    try:
        spec = PsiSpec.sqrt_family(a, b, c)
    except InvalidSpec:
        row["structure_pass"] = "invalid"
        return row
    rep = check_structure(spec, smax)
    row["structure_pass"] = rep.passed
    row["min_margin"] = min(rep.margin_a, rep.margin_b, rep.margin_c, rep.margin_d)
    try:
        r = rb.product_radius(spec)
    except NoRoot:
        return row
    rho = math.sqrt(1 - r * r)
    row.update(product_r=r, product_lambda1=rho / r, product_lambda2=-r / rho)
    try:
        lo, hi = _default_profile_bracket(spec)
        scan = rb.scan_closures(spec, lo, hi, n=n_u)
    except WlabError:
        return row
    rng = scan.to_dict()["delta_v_range"]
    if rng is not None:
        row.update(delta_v_min=rng[0], delta_v_max=rng[1])
    row["closure_candidates"] = len(scan.candidates)
    if scan.candidates:
        best = min(scan.candidates, key=lambda c: (c["q"], c["p"]))
        row["first_candidate"] = f"{best['p']}/{best['q']}"
    return row


def cmd_scan(args):
    rows = [
        _scan_row(a, b, c, args.smax, args.scan_points)
        for a in args.a_list for b in args.b_list for c in args.c_list
    ]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=SCAN_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_PASS


def build_parser():
    parser = _Parser(prog="wlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("psi-check", help="check the structure conditions of psi")
    _add_spec_flags(p)
    p.add_argument("--smax", type=float, default=20.0)
    p.add_argument("--n", type=int, default=10_000)
    p.set_defaults(func=cmd_psi_check)

    p = sub.add_parser("construct", help="build a product or rotational torus grid")
    p.add_argument("kind", choices=["product", "profile"])
    _add_spec_flags(p)
    p.add_argument("--p", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--bracket", type=_bracket, help="turning-latitude bracket lo,hi")
    p.add_argument("--nt", type=int)
    p.add_argument("--nth", type=int)
    p.add_argument("--mode", choices=["quick", "full"], default="full",
                   help="default resolution: 64 (quick) or 128 (full)")
    p.add_argument("--substeps", type=int, default=16, help="ODE steps per grid interval")
    p.add_argument("--scan-points", type=int, default=24)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--profile-out", type=Path)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("verify", help="run every check on a grid")
    p.add_argument("--grid", type=Path, required=True)
    _add_spec_flags(p)
    p.add_argument("--alpha-list", type=_float_list)
    p.add_argument("--two-point-coarse", type=int, default=4)
    p.add_argument("--mode", choices=["quick", "full"], default="full")
    p.add_argument("--report", type=Path)
    p.add_argument("--plots", type=Path, help="directory for CSV plot data and PNG figures")
    p.add_argument("--timings", action="store_true", help="record wall-clock stage timings")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scan", help="sweep SqrtFamily parameters into a summary CSV")
    p.add_argument("--a-list", type=_float_list, default=[1.0])
    p.add_argument("--b-list", type=_float_list, default=[0.0])
    p.add_argument("--c-list", type=_float_list, default=[0.0])
    p.add_argument("--smax", type=float, default=20.0)
    p.add_argument("--scan-points", type=int, default=16)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_scan)
    return parser


def _validate(args):
    for name in ("nt", "nth", "n", "two_point_coarse", "substeps", "scan_points"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise InputError(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "alpha_list", None) and any(a <= 1 for a in args.alpha_list):
        raise InputError("every alpha must exceed 1")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        return args.func(args)
    except InputError as exc:
        print(f"wlab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidSpec, GridFormatError, OutOfRange, OSError, ValueError) as exc:
        print(f"wlab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NotFound, NoRoot) as exc:
        print(f"wlab: not found: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except WlabError as exc:
        print(f"wlab: check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
