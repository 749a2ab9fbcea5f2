"""Command-line front end.

Every subcommand validates its whole configuration before building a grid,
prints a JSON summary on stdout and, with ``--out``, writes a CSV table.
Exit codes: 0 success, 2 contract violation, 1 internal error, 64 usage.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .fundsol import WeightEvaluator, laplace_constant
from .grid import MAX_DIM, MIN_DIM, MIN_NODES, DomainShape, GridDomain, ShapeKind, build_domain
from .inequalities import (
    ALPHA_MINUS,
    ALPHA_PLUS,
    CutoffSpec,
    InequalityCase,
    InequalityError,
    RatioReport,
    counterexample_suite,
    green_sandwich_check,
    hardy_chain_ratio,
    hardy_ratio,
    inequality_ratio,
)
from .io import read_config
from .operators import Lame3D, Polyharmonic, ScalarDivForm
from .positivity import (
    DEFAULT_PUNCTURE_CELLS,
    PunctureSpec,
    SweepRow,
    ThresholdBracketError,
    min_rayleigh,
    lame_min_eig,
    threshold_bisect,
)
from .reports import csv_text, to_json
from .testfunctions import TestFunctionSpec, generate_test_function

EXIT_OK, EXIT_ERROR, EXIT_FINDING, EXIT_USAGE = 0, 1, 2, 64

log = logging.getLogger("eplab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- value parsing -------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _pair(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    return vals[0], vals[1]


def _shape_list(text: str) -> list[ShapeKind]:
    aliases = {"l_shape": "lshape", "l-shape": "lshape"}
    out = []
    for t in str(text).split(","):
        t = aliases.get(t.strip().lower(), t.strip().lower())
        try:
            out.append(ShapeKind(t))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"unknown shape {t!r}") from exc
    return out


def _shape(text: str) -> ShapeKind:
    kinds = _shape_list(text)
    if len(kinds) != 1:
        raise argparse.ArgumentTypeError("expected a single shape")
    return kinds[0]


def _unit_shape(kind: ShapeKind) -> DomainShape:
    """Shape filling the box ``[-1, 1]^n``."""
    return DomainShape(kind, 1.0 if kind is ShapeKind.BALL else 2.0)


# -- parser --------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat 'key = value' file; flags override it")
    p.add_argument("--out", type=Path, help="CSV output path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eplab", description="Numerical checks of weighted positivity and pointwise inequalities.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify-positivity", help="minimum eigenvalue of a punctured weighted form")
    _common(p)
    p.add_argument("--op", choices=["lame", "laplace", "polyharmonic"], default="lame")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--grid", type=int, default=17)
    p.add_argument("--shape", type=_shape, default="ball")
    p.add_argument("--puncture", type=int, default=DEFAULT_PUNCTURE_CELLS)
    p.add_argument("--expect", choices=["nonneg", "neg"])
    p.add_argument("--zero-tol", type=float, default=1e-6)

    p = sub.add_parser("sweep-alpha", help="bisect the edges of the Lamé positivity window")
    _common(p)
    p.add_argument("--grid", type=int, action="append")
    p.add_argument("--shape", type=_shape, default="ball")
    p.add_argument("--puncture", type=int, default=DEFAULT_PUNCTURE_CELLS)
    p.add_argument("--bracket-lo", type=_pair, default=(-0.9, 0.0))
    p.add_argument("--bracket-hi", type=_pair, default=(1.0, 5.0))
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--alphas", type=_float_list, help="evaluate these alphas instead of bisecting")
    p.add_argument("--zero-tol", type=float, default=1e-6)

    p = sub.add_parser("check-inequality", help="normalized ratios over seeded test functions")
    _common(p)
    p.add_argument("--case", choices=["thm1", "lame", "higher"], default="thm1")
    p.add_argument("--op", choices=["laplace", "sine"], default="laplace",
                   help="THM1 operator: -Laplace or a = (1 + sin(x1)/2) I")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--s", type=float, default=2.0)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--grid", type=int)
    p.add_argument("--shapes", type=_shape_list, default="ball")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--allowance", type=float, default=0.05)

    p = sub.add_parser("counterexample", help="refinement study at the critical exponent")
    _common(p)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--base-grid", type=int, default=CutoffSpec.base_nodes)
    p.add_argument("--allowance", type=float, default=0.05)

    p = sub.add_parser("hardy", help="single and chained Hardy ratios")
    _common(p)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--grid", type=int)
    p.add_argument("--shape", type=_shape, default="ball")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--allowance", type=float, default=0.05)

    p = sub.add_parser("green-bounds", help="empirical Green's function sandwich constants")
    _common(p)
    p.add_argument("--op", choices=["laplace", "sine"], default="laplace")
    p.add_argument("--scale", type=float, default=1.0, help="multiply the coefficient matrix by this factor")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--grid", type=int, default=33)
    p.add_argument("--shape", type=_shape, default="ball")
    p.add_argument("--slack", type=float, default=0.1)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    try:
        items = read_config(args.config)
    except (OSError, ValueError) as exc:
        raise UsageError(f"config: {exc}") from exc
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in items.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"config: unknown key {key!r}")
        if action.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        convert = action.type or str
        try:
            if isinstance(action, argparse._AppendAction):
                defaults[key] = [convert(v.strip()) for v in raw.split(",")]
            else:
                defaults[key] = convert(raw)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config: bad value for {key!r}: {raw!r}") from exc
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config: {key!r} must be one of {sorted(action.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# -- validation helpers ----------------------------------------------------------

def _need(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def _check_grid(nodes: int, dim: int) -> None:
    _need(nodes >= MIN_NODES, f"grid must have at least {MIN_NODES} nodes per axis, got {nodes}")
    _need(MIN_DIM <= dim <= MAX_DIM, f"dimension must lie in [{MIN_DIM}, {MAX_DIM}], got {dim}")
    _need(nodes**dim <= 2**25, f"grid {nodes}^{dim} is too large")


def _check_seed_trials(args) -> None:
    _need(args.seed >= 0, "seed must be nonnegative")
    if hasattr(args, "trials"):
        _need(args.trials >= 1, "trials must be positive")


def _pool_map(fn: Callable, items: Iterable) -> list:
    workers = max(1, int(os.environ.get("EPL_THREADS", "1") or 1))
    items = list(items)
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _emit(args, summary: dict, header: Sequence[str] | None = None, rows: Sequence | None = None) -> None:
    sys.stdout.write(to_json(summary))
    if args.out is not None and header is not None:
        Path(args.out).write_text(csv_text(header, rows or []))


def _sine_coefficient(scale: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda X: scale * (1.0 + 0.5 * np.sin(X[..., 0]))


def _scalar_op(kind: str, n: int, scale: float = 1.0) -> ScalarDivForm:
    if kind == "laplace":
        if scale == 1.0:
            return ScalarDivForm.laplacian(n)
        return ScalarDivForm.constant(scale * np.eye(n))
    return ScalarDivForm.isotropic(n, _sine_coefficient(scale), 0.5 * scale, 1.5 * scale)


# -- commands ----------------------------------------------------------------------

def cmd_verify_positivity(args) -> int:
    _check_grid(args.grid, args.n)
    _need(args.puncture >= 1, "puncture must be at least one cell")
    if args.op == "lame":
        _need(args.n == 3, "the Lamé system is three-dimensional")
        _need(args.alpha > -1.0, f"alpha must exceed -1, got {args.alpha:g}")
        op, w = Lame3D(args.alpha), WeightEvaluator.lame(args.alpha)
    elif args.op == "laplace":
        op, w = ScalarDivForm.laplacian(args.n), WeightEvaluator.laplace(args.n)
    else:
        _need(args.n > 2 * args.m, "polyharmonic weight needs n > 2m")
        op = Polyharmonic(args.m, args.n)
        w = WeightEvaluator.polyharmonic(args.m, args.n)
    dom = build_domain(_unit_shape(args.shape), args.grid, args.n)
    punct = PunctureSpec(dom.center_node(), args.puncture)
    res = min_rayleigh(op, w, dom, punct)
    nonneg = res.value >= -args.zero_tol
    ok = args.expect is None or (args.expect == "nonneg") == nonneg
    summary = {
        "op": args.op,
        "alpha": args.alpha if args.op == "lame" else None,
        "n": args.n,
        "grid": args.grid,
        "shape": args.shape.value,
        "puncture": args.puncture,
        "min_eig": res.value,
        "residual": res.residual,
        "iters": res.matvecs,
        "admissible_dim": res.admissible_dim,
        "sign": "nonneg" if nonneg else "neg",
        "expect": args.expect,
        "ok": ok,
    }
    _emit(args, summary, SweepRow.CSV_HEADER.split(","),
          [[args.alpha, res.value, args.grid, args.puncture, res.matvecs, res.residual]])
    return EXIT_OK if ok else EXIT_FINDING


def cmd_sweep_alpha(args) -> int:
    grids = args.grid or [17]
    for g in grids:
        _check_grid(g, 3)
    _need(args.tol > 0, "tol must be positive")
    _need(args.puncture >= 1, "puncture must be at least one cell")
    for name, (a, b) in (("bracket-lo", args.bracket_lo), ("bracket-hi", args.bracket_hi)):
        _need(-1.0 < a < b, f"{name} must satisfy -1 < lo < hi")
    if args.alphas is not None:
        _need(all(a > -1.0 for a in args.alphas), "every alpha must exceed -1")

    rows: list[SweepRow] = []
    per_grid, failed = [], False
    for g in grids:
        dom = build_domain(_unit_shape(args.shape), g, 3)
        entry: dict = {"grid": g}
        if args.alphas is not None:
            punct = PunctureSpec(dom.center_node(), args.puncture)
            results = _pool_map(lambda a: lame_min_eig(a, dom, punct), args.alphas)
            for a, res in zip(args.alphas, results):
                rows.append(SweepRow(a, res.value, g, args.puncture, res.matvecs, res.residual))
            entry["min_eig"] = {format(a, ".17g"): r.value for a, r in zip(args.alphas, results)}
        else:
            for key, bracket, rising in (("alpha_minus_est", args.bracket_lo, True),
                                         ("alpha_plus_est", args.bracket_hi, False)):
                try:
                    entry[key] = threshold_bisect(dom, bracket, rising, args.tol, args.puncture, args.zero_tol, rows)
                except ThresholdBracketError as exc:
                    entry[key] = None
                    entry.setdefault("diagnostics", []).append(str(exc))
                    print(f"eplab: grid {g}: {exc}", file=sys.stderr)
                    failed = True
        per_grid.append(entry)
    summary = {
        "reference": {"alpha_minus": ALPHA_MINUS, "alpha_plus": ALPHA_PLUS},
        "tol": args.tol,
        "puncture": args.puncture,
        "shape": args.shape.value,
        "grids": per_grid,
    }
    _emit(args, summary, SweepRow.CSV_HEADER.split(","),
          [[r.alpha, r.min_eig, r.grid, r.puncture, r.iters, r.residual] for r in rows])
    return EXIT_FINDING if failed else EXIT_OK


def _case_from_args(args) -> InequalityCase:
    try:
        if args.case == "thm1":
            return InequalityCase.thm1(args.n, args.s)
        if args.case == "lame":
            return InequalityCase.lame(args.alpha, args.q)
        return InequalityCase.higher(args.m, args.n, args.q)
    except InequalityError as exc:
        raise UsageError(str(exc)) from exc


def _default_grid(n: int) -> int:
    return {3: 33, 4: 17, 5: 13}.get(n, 9)


def cmd_check_inequality(args) -> int:
    _check_seed_trials(args)
    case = _case_from_args(args)
    grid = args.grid or _default_grid(case.n)
    _check_grid(grid, case.n)
    _need(args.allowance >= 0, "allowance must be nonnegative")
    if case.kind.value == "thm1":
        make_op = lambda: _scalar_op(args.op, case.n)
        comps, smooth = 1, 3
    elif case.kind.value == "lame":
        make_op = lambda: Lame3D(case.alpha)
        comps, smooth = 3, 3
    else:
        make_op = lambda: Polyharmonic(case.m, case.n)
        comps, smooth = 1, max(3, 2 * case.m)
    op = make_op()

    domains: dict[ShapeKind, GridDomain] = {}
    c2: dict[ShapeKind, float | None] = {}
    for kind in args.shapes:
        domains[kind] = build_domain(_unit_shape(kind), grid, case.n)
        c2[kind] = None
        if case.kind.value == "thm1" and args.op != "laplace":
            dom = domains[kind]
            c2[kind] = green_sandwich_check(op, _deep_node(dom), dom)[1]

    def trial(i: int) -> RatioReport:
        kind = args.shapes[i % len(args.shapes)]
        dom = domains[kind]
        seed = args.seed + i
        u = generate_test_function(dom, TestFunctionSpec(seed=seed, components=comps, smoothness=smooth))
        meta = {"seed": seed, "shape": kind.value, "grid": grid}
        return inequality_ratio(case, op, u, c2=c2[kind], meta=meta)

    reports = _pool_map(trial, range(args.trials))
    ratios = [r.normalized_ratio for r in reports]
    worst = int(np.argmax(ratios))
    summary = {
        "case": case.kind.value,
        "exponents": case.exponents,
        "op": args.op if case.kind.value == "thm1" else ("lame" if case.kind.value == "lame" else "polyharmonic"),
        "constant": reports[0].constant,
        "c2": {k.value: v for k, v in c2.items()} if case.kind.value == "thm1" else None,
        "grid": grid,
        "shapes": [k.value for k in args.shapes],
        "trials": args.trials,
        "seed": args.seed,
        "max_ratio": ratios[worst],
        "worst": reports[worst].as_dict(),
        "allowance": args.allowance,
        "passed": ratios[worst] <= 1.0 + args.allowance,
    }
    _emit(args, summary, RatioReport.CSV_COLUMNS, [r.csv_row() for r in reports])
    return EXIT_OK if summary["passed"] else EXIT_FINDING


def _deep_node(dom: GridDomain) -> tuple[int, ...]:
    """Interior node farthest from the boundary (first in row-major order on ties)."""
    nodes = np.argwhere(dom.interior_mask)
    if dom.shape is None:
        return dom.center_node()
    d = dom.shape.boundary_distance(dom.coordinates()[dom.interior_mask])
    return tuple(int(v) for v in nodes[int(np.argmax(d))])


def cmd_counterexample(args) -> int:
    _need(args.levels >= 3, f"levels too few to exhibit a trend (need at least 3), got {args.levels}")
    _need(args.n >= 3, "counterexample needs n >= 3")
    finest = (args.base_grid - 1) * 2 ** (args.levels - 1) + 1
    _check_grid(args.base_grid, args.n)
    _need(finest**args.n <= 2**23 + 2**22, f"finest level {finest}^{args.n} is too large")
    report = counterexample_suite(args.levels, CutoffSpec(n=args.n, base_nodes=args.base_grid),
                                  allowance=args.allowance)
    _emit(args, report.as_dict(), report.columns, report.rows)
    return EXIT_OK if report.passed else EXIT_FINDING


def cmd_hardy(args) -> int:
    _check_seed_trials(args)
    _need(args.k >= 1, "k must be at least 1")
    _need(1.0 <= args.q and args.k * args.q < args.n, f"Hardy needs 1 <= q and kq < n, got k={args.k}, q={args.q:g}")
    grid = args.grid or _default_grid(args.n)
    _check_grid(grid, args.n)
    dom = build_domain(_unit_shape(args.shape), grid, args.n)
    center = _deep_node(dom)
    smooth = max(3, args.k + 1)

    def trial(i: int):
        seed = args.seed + i
        u = generate_test_function(dom, TestFunctionSpec(seed=seed, smoothness=smooth))
        single = hardy_ratio(u, center, args.q, args.n) if args.k == 1 else math.nan
        chain = hardy_chain_ratio(u, center, args.q, args.k, args.n)
        return [seed, single, chain]

    rows = _pool_map(trial, range(args.trials))
    singles = [r[1] for r in rows if not math.isnan(r[1])]
    chains = [r[2] for r in rows]
    worst = max(singles + chains)
    summary = {
        "n": args.n,
        "q": args.q,
        "k": args.k,
        "grid": grid,
        "shape": args.shape.value,
        "trials": args.trials,
        "seed": args.seed,
        "max_single_ratio": max(singles) if singles else None,
        "max_chain_ratio": max(chains),
        "max_ratio": worst,
        "allowance": args.allowance,
        "passed": worst <= 1.0 + args.allowance,
    }
    _emit(args, summary, ["seed", "hardy_ratio", "chain_ratio"], rows)
    return EXIT_OK if summary["passed"] else EXIT_FINDING


def cmd_green_bounds(args) -> int:
    _check_grid(args.grid, args.n)
    _need(args.scale > 0, "scale must be positive")
    _need(args.slack >= 0, "slack must be nonnegative")
    op = _scalar_op(args.op, args.n, args.scale)
    dom = build_domain(_unit_shape(args.shape), args.grid, args.n)
    y0 = _deep_node(dom)
    c1, c2 = green_sandwich_check(op, y0, dom)
    whole_space = laplace_constant(args.n) / (args.scale * (0.5 if args.op == "sine" else 1.0))
    ok = 0.0 < c1 <= c2 <= (1.0 + args.slack) * whole_space
    summary = {
        "op": args.op,
        "scale": args.scale,
        "n": args.n,
        "grid": args.grid,
        "shape": args.shape.value,
        "pole": list(y0),
        "c1_emp": c1,
        "c2_emp": c2,
        "c2_bound": (1.0 + args.slack) * whole_space,
        "passed": ok,
    }
    _emit(args, summary, ["c1_emp", "c2_emp"], [[c1, c2]])
    return EXIT_OK if ok else EXIT_FINDING


COMMANDS = {
    "verify-positivity": cmd_verify_positivity,
    "sweep-alpha": cmd_sweep_alpha,
    "check-inequality": cmd_check_inequality,
    "counterexample": cmd_counterexample,
    "hardy": cmd_hardy,
    "green-bounds": cmd_green_bounds,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"eplab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        log.debug("internal error", exc_info=True)
        print(f"eplab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
