"""Command-line entry point: ``rotund <command> ...``.

Exit codes: 0 success, 1 usage error, 2 non-convergence (or quadrature
failure), 3 infeasible / rank-deficient problem, 4 probe or check failure.

Every run prints a JSON envelope ``{"config", "result", "metadata"}``
(``--format csv`` or ``table`` give projections of the same data).  The
output contains no timestamps, so identical arguments give identical
bytes.  Relative output paths (``--csv``, ``--json``, ...) are resolved
against ``$ROTUND_OUTPUT_DIR`` when it is set.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .exceptions import (ConvergenceError, CrossCheckError, DimensionError, DomainError, HypothesisViolation,
                         InfeasibleError, LevelSetExitError, NoConjugateError, QuadratureError, RankDeficientError,
                         UnknownNameError)

OUTPUT_ENV = "ROTUND_OUTPUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGENCE, EXIT_INFEASIBLE, EXIT_PROBE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n\n{self.format_help()}")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _out_path(path: str) -> str:
    base = os.environ.get(OUTPUT_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("handler", "default_format")}
    cfg["version"] = __version__
    return cfg


def _emit(args, result: dict, metadata: Optional[dict] = None, rows: Optional[list] = None) -> None:
    env = _clean({"config": _config(args), "result": result, "metadata": metadata or {}})
    fmt = args.format
    if fmt == "json" or (fmt == "csv" and not rows):
        sys.stdout.write(json.dumps(env, indent=2) + "\n")
    elif fmt == "csv":
        sys.stdout.write("# config: " + json.dumps(env["config"], sort_keys=True) + "\n")
        if env["metadata"]:
            sys.stdout.write("# metadata: " + json.dumps(env["metadata"], sort_keys=True) + "\n")
        sys.stdout.write(_rows_to_csv(_clean(rows)))
    else:
        sys.stdout.write(_table(env))


def _rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    keys = list(rows[0].keys())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([json.dumps(r[k]) if isinstance(r[k], (dict, list)) else r[k] for k in keys])
    return buf.getvalue()


def _table(env: dict) -> str:
    lines = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k, v in obj.items():
                walk(f"{prefix}.{k}" if prefix else k, v)
        elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
            for i, v in enumerate(obj):
                walk(f"{prefix}[{i}]", v)
        else:
            lines.append((prefix, json.dumps(obj) if isinstance(obj, list) else str(obj)))

    walk("", env)
    width = max(len(k) for k, _ in lines)
    return "".join(f"{k.ljust(width)}  {v}\n" for k, v in lines)


# ---------------------------------------------------------------------------
# integrands


def _integrand(args):
    from .integrands import catalog_get
    return catalog_get(args.integrand, getattr(args, "d", 1), p=getattr(args, "p", None))


def cmd_integrands_list(args) -> int:
    from .integrands import CATALOG_NAMES, catalog_get, classify
    out = []
    for name in CATALOG_NAMES:
        phi = catalog_get(name, 3 if name == "log_det" else 1)
        out.append({"name": name, "strongly_rotund": classify(phi).strongly_rotund,
                    "has_conjugate": phi.has_conjugate, "flags": phi.to_dict()["flags"]})
    _emit(args, {"integrands": out}, rows=[{"name": o["name"], "strongly_rotund": o["strongly_rotund"],
                                            "has_conjugate": o["has_conjugate"]} for o in out])
    return EXIT_OK


def cmd_integrands_show(args) -> int:
    from .integrands import classify
    phi = _integrand(args)
    info = phi.to_dict()
    info["conj_domain"] = phi.conj_domain.to_dict() if phi.conj_domain is not None else None
    info["classification"] = classify(phi).to_dict()
    _emit(args, info)
    return EXIT_OK


def cmd_integrands_eval(args) -> int:
    phi = _integrand(args)
    z = np.array(args.at, dtype=float)
    if z.size % phi.dimension:
        raise DimensionError(f"--at needs a multiple of {phi.dimension} numbers")
    pts = z.reshape(-1, phi.dimension)
    rows = []
    for p in pts:
        arg = p if phi.dimension > 1 else p[0]
        row = {"z": p.tolist(), "value": float(phi.value(arg))}
        if phi.has_conjugate:
            row["conj_value"] = float(phi.conj_value(arg))
        rows.append(row)
    _emit(args, {"integrand": phi.name, "points": rows}, rows=rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# maxent


def _load(args):
    from .maxent import load_problem
    return load_problem(args.problem)


def cmd_maxent_list(args) -> int:
    from .maxent import builtin_problems
    _emit(args, {"builtin": builtin_problems()})
    return EXIT_OK


def _solve_meta() -> dict:
    from .maxent import DIVERGENCE, GRAD_TOL, MAX_ITER
    return {"gradient_tol": GRAD_TOL, "max_iter_newton": MAX_ITER, "divergence_threshold": DIVERGENCE,
            "summation": "math.fsum"}


def cmd_maxent_solve(args) -> int:
    from .maxent import solve
    problem = _load(args)
    opts = {"tol": args.tol} if args.tol is not None else {}
    sol = solve(problem, max_iter=args.max_iter, method=args.method, **opts)
    result = {"problem": problem.label, "integrand": problem.integrand.name, **sol.to_dict()}
    if args.primal_csv:
        with open(_out_path(args.primal_csv), "w") as fh:
            sol.primal.to_csv(fh)
    rows = [{"lo": float(lo[0]), "hi": float(hi[0]), "x": float(v[0])}
            for lo, hi, v in zip(sol.primal.space.cell_lo, sol.primal.space.cell_hi, sol.primal.values)]
    _emit(args, result, _solve_meta(), rows=rows)
    return EXIT_OK if sol.converged else EXIT_NONCONVERGENCE


def cmd_maxent_oracle(args) -> int:
    from .maxent import brute_force_primal
    problem = _load(args)
    res = brute_force_primal(problem)
    _emit(args, {"problem": problem.label, "V": res.value, "kkt_residual": res.kkt_residual,
                 "feasibility_residual": res.feasibility_residual, "iterations": res.iterations})
    return EXIT_OK


def cmd_maxent_stability(args) -> int:
    from .maxent import stability_run
    problem = _load(args)
    schedule = args.schedule if args.schedule is not None else list(range(problem.m + 1))
    rep = stability_run(problem, schedule, strict=False)
    _emit(args, rep.to_dict(), _solve_meta(), rows=[r.__dict__ for r in rep.rows])
    return EXIT_OK if rep.monotone else EXIT_NONCONVERGENCE


# ---------------------------------------------------------------------------
# watson


def cmd_watson(args) -> int:
    from . import watson as W
    meta = W.quadrature_metadata()
    if args.threshold:
        a = W.alpha_bar()
        _emit(args, {"alpha_bar": a, "W1_at_1": W.watson(1.0), "reference": W.ALPHA_BAR,
                     "abs_error": abs(a - W.ALPHA_BAR)}, meta)
        return EXIT_OK
    if args.alpha is not None:
        res = W.classify_attainment(args.alpha)
        out = res.to_dict()
        if res.density is not None:
            out["normalization"] = res.density.normalization
            if args.density_csv:
                res.density.to_csv(_out_path(args.density_csv), n=args.grid)
                out["density_csv"] = args.density_csv
        _emit(args, out, meta)
        return EXIT_OK
    w = args.w
    W1 = W.watson(w, cross_check=args.cross_check)
    out = {"w": w, "W1": W1, "alpha": W.alpha_of_w(w), "attained": True}
    if args.cross_check:
        out["W1_cube"] = W.watson_cube(w)
    if args.verify:
        chk = W.verify_density_moments(W.BurgDensity(w, W1))
        out.update({"mass": chk.mass, "moment": chk.moment, "moment_error_estimate": chk.error_estimate})
    _emit(args, out, meta)
    return EXIT_OK


# ---------------------------------------------------------------------------
# lab


def _family(args):
    from .lab import family
    opts = {}
    if args.family == "rademacher":
        opts = {"center": args.center, "amplitude": args.amplitude}
    return family(args.family, **opts)


def _lab_meta() -> dict:
    from . import lab
    return {"hold_abs": lab.HOLD_ABS, "hold_factor": lab.HOLD_FACTOR, "fail_level": lab.FAIL_LEVEL,
            "dictionary": [g.label() for g in lab.default_dictionary()]}


def cmd_lab_families(args) -> int:
    from .lab import FAMILY_NAMES, family
    _emit(args, {"families": [{"name": n, "description": family(n).description,
                               "default_schedule": list(family(n).default_schedule)} for n in FAMILY_NAMES]})
    return EXIT_OK


def cmd_lab_run(args) -> int:
    from .lab import run
    fam, phi = _family(args), _integrand(args)
    rep = run(fam, phi, args.schedule, etas=args.etas)
    if args.csv:
        with open(_out_path(args.csv), "w") as fh:
            fh.write(rep.to_csv())
    rows = []
    for r in rep.rows:
        row = {"n": r.n, "value": r.value, "limit_value": rep.limit_value, "value_gap": r.value_gap, "l1": r.l1,
               "composition": r.composition, "weak_gap": r.weak_gap, "l1_norm": r.l1_norm}
        row.update({f"deviation_{e:g}": r.deviation[e] for e in rep.etas})
        rows.append(row)
    _emit(args, {"family": fam.name, "integrand": phi.name, "limit_value": rep.limit_value, "rows": rows,
                 "verdicts": rep.verdicts, "ui_profile": rep.ui_profile}, _lab_meta(), rows=rows)
    return EXIT_OK


def cmd_lab_preserve(args) -> int:
    from .lab import preservation_check_I, preservation_check_II
    fam, phi = _family(args), _integrand(args)
    check = preservation_check_I if args.check == "I" else preservation_check_II
    rep = check(phi, fam, args.schedule)
    _emit(args, rep.to_dict(), _lab_meta(), rows=rep.rows)
    return EXIT_OK if rep.passed else EXIT_PROBE


def cmd_lab_probe(args) -> int:
    from .lab import measure_to_value_probe
    fam, phi = _family(args), _integrand(args)
    rep = measure_to_value_probe(phi, fam, args.schedule)
    _emit(args, rep.to_dict(), _lab_meta())
    return EXIT_PROBE if rep.status == "violation" else EXIT_OK


# ---------------------------------------------------------------------------
# rotundity


def cmd_rotundity_classify(args) -> int:
    from .integrands import classify
    phi = _integrand(args)
    _emit(args, {"integrand": phi.name, **classify(phi).to_dict()})
    return EXIT_OK


def cmd_rotundity_suite(args) -> int:
    from .integrands import classify
    from .probes import run_suite, suite_failed
    phi = _integrand(args)
    results = run_suite(phi, seed=args.seed)
    out = {"integrand": phi.name, "dimension": phi.dimension, "classification": classify(phi).to_dict(),
           "probes": [r.to_dict() for r in results], "failed": suite_failed(results)}
    if args.json:
        with open(_out_path(args.json), "w") as fh:
            json.dump(_clean({"config": _config(args), "result": out}), fh, indent=2)
            fh.write("\n")
    rows = [{"probe": r.name, "status": r.status, "applicable": r.applicable} for r in results]
    from . import probes
    meta = {"seed": args.seed, "fenchel_young_tol": probes.FY_TOL, "gradient_tol": probes.GRAD_TOL,
            "numeric_conjugate_tol": probes.NUMERIC_CONJ_TOL, "identity_tol": probes.IDENTITY_TOL}
    _emit(args, out, meta, rows=rows)
    return EXIT_PROBE if out["failed"] else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "csv", "table"), default=None,
                        help="output format (default json; csv for 'lab run')")

    integ = _Parser(add_help=False)
    integ.add_argument("--integrand", required=True)
    integ.add_argument("--d", type=int, default=1, help="dimension (svec length for log_det)")
    integ.add_argument("--p", type=float, default=None, help="exponent for norm_power")

    parser = _Parser(prog="rotund", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"rotund {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    # integrands
    p = sub.add_parser("integrands", help="inspect the integrand catalog")
    s = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = s.add_parser("list", parents=[common])
    q.set_defaults(handler=cmd_integrands_list)
    q = s.add_parser("show", parents=[common])
    q.add_argument("integrand")
    q.add_argument("--d", type=int, default=1)
    q.add_argument("--p", type=float, default=None)
    q.set_defaults(handler=cmd_integrands_show)
    q = s.add_parser("eval", parents=[common])
    q.add_argument("integrand")
    q.add_argument("--d", type=int, default=1)
    q.add_argument("--p", type=float, default=None)
    q.add_argument("--at", type=_floats, required=True, help="comma-separated coordinates")
    q.set_defaults(handler=cmd_integrands_eval)

    # maxent
    p = sub.add_parser("maxent", help="moment-constrained entropy problems")
    s = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = s.add_parser("list", parents=[common])
    q.set_defaults(handler=cmd_maxent_list)
    for name, handler in (("solve", cmd_maxent_solve), ("oracle", cmd_maxent_oracle),
                          ("stability", cmd_maxent_stability)):
        q = s.add_parser(name, parents=[common])
        q.add_argument("--problem", required=True, help="JSON file or builtin:<name>")
        if name == "solve":
            q.add_argument("--tol", type=float, default=None)
            q.add_argument("--max-iter", type=int, default=None)
            q.add_argument("--method", choices=("auto", "newton", "gradient"), default="auto")
            q.add_argument("--primal-csv", default=None)
        if name == "stability":
            q.add_argument("--schedule", type=_ints, default=None, help="constraint counts, e.g. 0,1,2,4,8")
        q.set_defaults(handler=handler)

    # watson
    p = sub.add_parser("watson", help="Watson integral and Burg attainment threshold", parents=[common])
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--w", type=float)
    g.add_argument("--threshold", action="store_true")
    g.add_argument("--alpha", type=float)
    p.add_argument("--cross-check", action="store_true", help="also evaluate the cube route")
    p.add_argument("--verify", action="store_true", help="check mass and moment of the density")
    p.add_argument("--density-csv", default=None)
    p.add_argument("--grid", type=int, default=16, help="points per axis for --density-csv")
    p.set_defaults(handler=cmd_watson)

    # lab
    p = sub.add_parser("lab", help="convergence lab")
    s = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = s.add_parser("families", parents=[common])
    q.set_defaults(handler=cmd_lab_families)
    fam = _Parser(add_help=False)
    fam.add_argument("--family", required=True)
    fam.add_argument("--schedule", type=_ints, default=None)
    fam.add_argument("--center", type=float, default=1.0, help="rademacher only")
    fam.add_argument("--amplitude", type=float, default=0.5, help="rademacher only")
    q = s.add_parser("run", parents=[common, integ, fam])
    q.add_argument("--etas", type=_floats, default=[0.1, 0.5, 1.0])
    q.add_argument("--csv", default=None)
    q.set_defaults(handler=cmd_lab_run, default_format="csv")
    q = s.add_parser("preserve", parents=[common, integ, fam])
    q.add_argument("--check", choices=("I", "II"), required=True)
    q.set_defaults(handler=cmd_lab_preserve)
    q = s.add_parser("probe", parents=[common, integ, fam])
    q.set_defaults(handler=cmd_lab_probe)

    # rotundity
    p = sub.add_parser("rotundity", help="strong-rotundity classifier and probe suite")
    s = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = s.add_parser("classify", parents=[common, integ])
    q.set_defaults(handler=cmd_rotundity_classify)
    q = s.add_parser("suite", parents=[common, integ])
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--json", default=None)
    q.set_defaults(handler=cmd_rotundity_suite)
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    if args.format is None:
        args.format = getattr(args, "default_format", "json")
    try:
        return args.handler(args)
    except (InfeasibleError, RankDeficientError) as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except (ConvergenceError, QuadratureError, CrossCheckError) as exc:
        sys.stderr.write(f"not converged: {exc}\n")
        return EXIT_NONCONVERGENCE
    except (HypothesisViolation, LevelSetExitError) as exc:
        sys.stderr.write(f"check refused: {exc}\n")
        return EXIT_PROBE
    except (UnknownNameError, DomainError, DimensionError, NoConjugateError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"error: {msg}\n")
        return EXIT_USAGE


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
