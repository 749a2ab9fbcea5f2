"""Multiplicative pointwise inequalities, Hardy steps, Green bounds, counterexample.

Three families are checked, each as ``lhs <= C * rhs``:

* THM1, scalar ``-D_i(a_ij D_j u)`` in ``R^n``:
  ``||u||_inf^(n-1) <= C ||Lu||_p ||Du||_q^(n-2)`` with ``p = s/(s-1)``,
  ``q = (n-2)s``, ``s < n/(n-2)`` and ``C = c2 (n-1) (q/(n-q))^(n-2)``.
* LAME, 3D Lamé system:
  ``||u||_inf^2 <= C ||Lu||_p ||Du||_q`` with ``p = q/(q-1)``, ``q < 3`` and
  ``C = 2 c_alpha (1 + |alpha|/(alpha+2)) q/(3-q)``.
* HIGHER, ``(-Delta)^m`` with homogeneous fundamental solution ``F``:
  ``||u||_inf^2 <= C ||D^k u||_q ||Lu||_q'`` with ``k = n - 2m``,
  ``r = n/q`` and ``C = 2 max|F(omega)| / ((r-k)(r-k+1)...(r-1))``.

The normalized ratio ``lhs / (C rhs)`` must not exceed one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import exp1, gamma, gammaincc

from .fundsol import WeightEvaluator, lame_constant, laplace_constant, weight_sup_on_sphere
from .grid import (
    DomainShape,
    GridDomain,
    GridFunction,
    ShapeKind,
    build_domain,
    gradient,
    integrate,
    lp_norm,
    sobolev_seminorm,
)
from .operators import (
    Lame3D,
    OperatorSpec,
    Polyharmonic,
    ScalarDivForm,
    SolveConfig,
    apply,
    green_column,
)
from .reports import ExperimentReport

# Ends of the proven weighted-positivity window of the Lamé system.
ALPHA_MINUS = -0.194
ALPHA_PLUS = 1.524


class CaseKind(str, enum.Enum):
    THM1 = "thm1"
    LAME = "lame"
    HIGHER = "higher"


class InequalityError(ValueError):
    pass


@dataclass(frozen=True)
class InequalityCase:
    kind: CaseKind
    n: int = 3
    s: float | None = None
    q: float | None = None
    alpha: float | None = None
    m: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CaseKind(self.kind))
        if self.kind is CaseKind.THM1:
            if self.s is None:
                raise InequalityError("THM1 needs s")
            if self.n < 3:
                raise InequalityError("THM1 needs n >= 3")
            if not 1 < self.s < self.n / (self.n - 2):
                raise InequalityError(
                    f"THM1 needs 1 < s < n/(n-2) = {self.n / (self.n - 2):g}, got s = {self.s:g}"
                )
        elif self.kind is CaseKind.LAME:
            if self.q is None or self.alpha is None:
                raise InequalityError("LAME needs alpha and q")
            if self.n != 3:
                raise InequalityError("LAME lives in three dimensions")
            if not 1 < self.q < 3:
                raise InequalityError(f"LAME needs 1 < q < 3, got q = {self.q:g}")
            if not ALPHA_MINUS < self.alpha < ALPHA_PLUS:
                raise InequalityError(
                    f"LAME needs alpha in ({ALPHA_MINUS}, {ALPHA_PLUS}), got alpha = {self.alpha:g}"
                )
        else:
            if self.q is None or self.m is None:
                raise InequalityError("HIGHER needs m and q")
            if not self.n > 2 * self.m:
                raise InequalityError("HIGHER needs n > 2m")
            bound = self.n / (self.n - 2 * self.m)
            if not 1 < self.q < bound:
                raise InequalityError(f"HIGHER needs 1 < q < n/(n-2m) = {bound:g}, got q = {self.q:g}")

    @classmethod
    def thm1(cls, n: int, s: float) -> "InequalityCase":
        return cls(CaseKind.THM1, n=n, s=s)

    @classmethod
    def lame(cls, alpha: float, q: float) -> "InequalityCase":
        return cls(CaseKind.LAME, n=3, q=q, alpha=alpha)

    @classmethod
    def higher(cls, m: int, n: int, q: float) -> "InequalityCase":
        return cls(CaseKind.HIGHER, n=n, q=q, m=m)

    @property
    def exponents(self) -> dict:
        if self.kind is CaseKind.THM1:
            s = self.s
            return {"s": s, "p": s / (s - 1), "q": (self.n - 2) * s, "a": 1.0 / (self.n - 1)}
        if self.kind is CaseKind.LAME:
            return {"q": self.q, "p": self.q / (self.q - 1)}
        k = self.n - 2 * self.m
        return {"q": self.q, "q_conj": self.q / (self.q - 1), "k": k, "r": self.n / self.q}


def thm1_constant(n: int, s: float, c2: float) -> float:
    q = (n - 2) * s
    return c2 * (n - 1) * (q / (n - q)) ** (n - 2)


def lame_ineq_constant(alpha: float, q: float) -> float:
    return 2.0 * lame_constant(alpha) * (1.0 + abs(alpha) / (alpha + 2.0)) * (q / (3.0 - q))


def hardy_chain_constant(n: int, q: float, k: int) -> float:
    """``prod_{j=1..k} 1/(r - j)`` with ``r = n/q``."""
    r = n / q
    return math.prod(1.0 / (r - j) for j in range(1, k + 1))


def higher_constant(m: int, n: int, q: float) -> float:
    c4 = weight_sup_on_sphere(WeightEvaluator.polyharmonic(m, n))
    return 2.0 * c4 * hardy_chain_constant(n, q, n - 2 * m)


def biharmonic_closed_form_constant(n: int) -> float:
    """``Gamma(4 - n/2) / (2 pi^(n/2) (n-2)(n-4))``, the ``q = 2`` biharmonic constant."""
    return math.gamma(4 - 0.5 * n) / (2.0 * math.pi ** (0.5 * n) * (n - 2) * (n - 4))


@dataclass
class RatioReport:
    case: str
    exponents: dict
    lhs: float
    rhs: float
    constant: float
    normalized_ratio: float
    norms: dict
    meta: dict = field(default_factory=dict)

    CSV_COLUMNS = ["case", "seed", "shape", "grid", "lhs", "rhs", "constant", "normalized_ratio"]

    def csv_row(self) -> list:
        return [
            self.case,
            self.meta.get("seed", ""),
            self.meta.get("shape", ""),
            self.meta.get("grid", ""),
            self.lhs,
            self.rhs,
            self.constant,
            self.normalized_ratio,
        ]

    def as_dict(self) -> dict:
        return {
            "case": self.case,
            "exponents": self.exponents,
            "constant": self.constant,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "normalized_ratio": self.normalized_ratio,
            "norms": self.norms,
            **self.meta,
        }


def _ratio(lhs: float, rhs: float, C: float) -> float:
    if rhs == 0.0:
        if lhs == 0.0:
            return 0.0
        raise InequalityError("inconsistent zero: right-hand side vanishes but u does not")
    return lhs / (C * rhs)


def thm1_sides(op: OperatorSpec, u: GridFunction, n: int, s: float) -> tuple[float, float, dict]:
    """Both sides of the THM1 inequality for any ``s > 1`` (no range check)."""
    p, q = s / (s - 1), (n - 2) * s
    sup = lp_norm(u, math.inf)
    lu = lp_norm(apply(op, u), p)
    du = sobolev_seminorm(u, 1, q)
    norms = {"u_inf": sup, "Lu_p": lu, "Du_q": du}
    return sup ** (n - 1), lu * du ** (n - 2), norms


def inequality_ratio(
    case: InequalityCase,
    op: OperatorSpec,
    u: GridFunction,
    c2: float | None = None,
    meta: dict | None = None,
) -> RatioReport:
    """Evaluate one inequality on ``u`` and normalise by the explicit constant.

    For THM1 with a non-Laplacian operator the Green bound ``c2`` must be
    supplied (e.g. from :func:`green_sandwich_check`).
    """
    dim = u.domain.dim
    if dim != case.n:
        raise InequalityError(f"case is {case.n}-dimensional, grid is {dim}-dimensional")
    ex = case.exponents
    if case.kind is CaseKind.THM1:
        if not isinstance(op, ScalarDivForm):
            raise InequalityError("THM1 needs a scalar divergence-form operator")
        if c2 is None:
            if not op.is_laplacian:
                raise InequalityError("THM1 with variable coefficients needs an empirical c2")
            c2 = laplace_constant(case.n)
        C = thm1_constant(case.n, case.s, c2)
        lhs, rhs, norms = thm1_sides(op, u, case.n, case.s)
        norms["c2"] = c2
    elif case.kind is CaseKind.LAME:
        if not isinstance(op, Lame3D) or op.alpha != case.alpha:
            raise InequalityError("LAME case needs the Lamé operator with the same alpha")
        C = lame_ineq_constant(case.alpha, case.q)
        sup = lp_norm(u, math.inf)
        lu = lp_norm(apply(op, u), ex["p"])
        du = sobolev_seminorm(u, 1, case.q)
        norms = {"u_inf": sup, "Lu_p": lu, "Du_q": du}
        lhs, rhs = sup**2, lu * du
    else:
        if not isinstance(op, Polyharmonic) or (op.m, op.n) != (case.m, case.n):
            raise InequalityError("HIGHER case needs the matching polyharmonic operator")
        C = higher_constant(case.m, case.n, case.q)
        sup = lp_norm(u, math.inf)
        dk = sobolev_seminorm(u, ex["k"], case.q)
        lu = lp_norm(apply(op, u), ex["q_conj"])
        norms = {"u_inf": sup, "Dku_q": dk, "Lu_qconj": lu}
        lhs, rhs = sup**2, dk * lu
    ratio = _ratio(lhs, rhs, C)
    return RatioReport(case.kind.value, ex, lhs, rhs, C, ratio, norms, dict(meta or {}))


# -- Hardy -------------------------------------------------------------------

def _upper_gamma(a: float, x: np.ndarray) -> np.ndarray:
    """Upper incomplete gamma ``Gamma(a, x)`` for any real ``a`` and ``x > 0``."""
    if a > 0:
        return gammaincc(a, x) * gamma(a)
    if a == 0:
        return exp1(x)
    return (_upper_gamma(a + 1.0, x) - x**a * np.exp(-x)) / a


def lattice_zeta(n: int, s: float, cutoff: int = 4) -> float:
    """Epstein zeta ``sum_{k != 0} |k|^-s`` of ``Z^n``, analytically continued.

    Evaluated by theta-function splitting; terms with ``|k|_inf > cutoff``
    are below ``exp(-pi cutoff^2)``. ``s = n`` is a pole.
    """
    if s == n or s <= 0:
        raise ValueError("lattice zeta needs 0 < s != n")
    k = np.arange(-cutoff, cutoff + 1)
    grids = np.meshgrid(*([k] * n), indexing="ij")
    x = np.pi * sum(g.astype(float) ** 2 for g in grids).ravel()
    x = x[x > 0]

    def upper(a):
        return _upper_gamma(a, x) * x ** (-a)

    total = math.fsum(upper(0.5 * s)) + math.fsum(upper(0.5 * (n - s)))
    total += 2.0 / (s - n) - 2.0 / s
    return total * np.pi ** (0.5 * s) / gamma(0.5 * s)


def _weighted_power_integral(u: GridFunction, center, q: float, power: float) -> float:
    """Midpoint sum of ``|u|^q |x - c|^-power``, punctured at the node ``c``.

    The punctured lattice sum of a ``|x|^-power`` singularity is off by
    ``zeta(power) h^(n - power) |u(c)|^q`` at leading order; that term is
    subtracted.
    """
    dom = u.domain
    center = tuple(int(i) for i in center)
    r = dom.distance_from(center)
    keep = dom.interior_mask & (r > 0.5 * dom.spacing)
    mag = u.magnitude()
    total = integrate(mag[keep] ** q * r[keep] ** (-power), dom)
    at_center = float(mag[center]) ** q
    if at_center == 0.0:
        return total
    n, h = dom.dim, dom.spacing
    return total - lattice_zeta(n, power) * h ** (n - power) * at_center


def hardy_ratio(u: GridFunction, center, q: float, n: int) -> float:
    """``int |u|^q |x-c|^-q / ((q/(n-q))^q int |Du|^q)``; at most one in the continuum."""
    if n != u.domain.dim:
        raise ValueError("n must equal the grid dimension")
    if not 1 <= q < n:
        raise ValueError(f"Hardy's inequality needs 1 <= q < n, got q = {q}")
    num = _weighted_power_integral(u, center, q, q)
    den = (q / (n - q)) ** q * sobolev_seminorm(u, 1, q) ** q
    return _ratio(num, den, 1.0)


def hardy_chain_ratio(u: GridFunction, center, q: float, k: int, n: int) -> float:
    """``(int |u|^q |x-c|^-kq)^(1/q) / (prod 1/(r-j) ||D^k u||_q)`` with ``r = n/q``."""
    if n != u.domain.dim:
        raise ValueError("n must equal the grid dimension")
    if k < 1 or not k * q < n:
        raise ValueError(f"chained Hardy needs k >= 1 and kq < n, got k = {k}, q = {q}")
    num = _weighted_power_integral(u, center, q, k * q) ** (1.0 / q)
    den = hardy_chain_constant(n, q, k) * sobolev_seminorm(u, k, q)
    return _ratio(num, den, 1.0)


# -- Green's function bounds -------------------------------------------------

def green_sandwich_check(
    op: ScalarDivForm, y0, domain: GridDomain, cfg: SolveConfig | None = None
) -> tuple[float, float]:
    """Empirical ``(c1, c2)`` with ``c1 <= G(x, y0) |x - y0|^(n-2) <= c2``.

    Sampled over nodes with ``3h <= |x - y0| <= dist(y0, boundary) / 2``.
    """
    if not isinstance(op, ScalarDivForm):
        raise TypeError("Green sandwich applies to scalar divergence-form operators")
    y0 = tuple(int(i) for i in y0)
    n, h = domain.dim, domain.spacing
    dist = domain.boundary_distance(y0)
    interior_nodes = np.argwhere(domain.interior_mask)
    diameter = h * float(np.max(interior_nodes.max(axis=0) - interior_nodes.min(axis=0)) + 2)
    if dist < 0.25 * diameter:
        raise ValueError("pole is not deep inside the domain")
    r = domain.distance_from(y0)
    window = domain.interior_mask & (r >= 3 * h * (1 - 1e-12)) & (r <= 0.5 * dist)
    if not window.any():
        raise ValueError("window empty: domain too small for the Green sandwich")
    G = green_column(op, domain, y0, cfg)
    g = G.values[..., 0][window] * r[window] ** (n - 2)
    return float(g.min()), float(g.max())


# -- critical-exponent counterexample ----------------------------------------

@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff equal to one on ``[0, inner]`` and zero beyond ``outer``.

    The transition is the quintic smoothstep, twice continuously
    differentiable at both ends. Level ``l`` of the suite uses
    ``(base_nodes - 1) 2^l + 1`` nodes per axis on the ball of radius
    ``outer``.
    """

    inner: float = 0.5
    outer: float = 1.0
    n: int = 3
    base_nodes: int = 25

    def __post_init__(self):
        if not 0 < self.inner < self.outer <= 1.0:
            raise ValueError("cutoff needs 0 < inner < outer <= 1")
        if self.n < 3:
            raise ValueError("counterexample needs n >= 3")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        t = np.clip((np.asarray(r) - self.inner) / (self.outer - self.inner), 0.0, 1.0)
        return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def loglog_profile(r: np.ndarray, h: float) -> np.ndarray:
    """``log|log rho|`` with the smoothed radius ``rho^2 = r^2 + h^2 exp(-r^2/h^2)``.

    Equals ``log|log r|`` up to ``exp(-16)`` relative for ``r >= 4h`` and is
    finite at the origin, where it takes the value ``log|log h|``.
    """
    r = np.asarray(r, dtype=float)
    rho = np.sqrt(r * r + h * h * np.exp(-((r / h) ** 2)))
    with np.errstate(divide="ignore"):
        return np.log(np.abs(np.log(rho)))


def counterexample_function(domain: GridDomain, cutoff: CutoffSpec) -> GridFunction:
    r = np.sqrt(np.sum(domain.coordinates() ** 2, axis=-1))
    zeta = cutoff(r)
    vals = np.zeros(domain.extents)
    live = domain.interior_mask & (zeta > 0)
    vals[live] = zeta[live] * loglog_profile(r[live], domain.spacing)
    return GridFunction(domain, vals)


COUNTEREXAMPLE_COLUMNS = ["level", "h", "sup_u", "du_l3", "lap_l32", "critical_ratio"]


def counterexample_suite(
    levels: int = 4,
    cutoff: CutoffSpec | None = None,
    allowance: float = 0.05,
    min_growth: float = 1.5,
    min_shrink: float = 0.25,
    pointwise_limit: float = 4.0,
) -> ExperimentReport:
    """Refinement study of ``zeta(|x|) log|log|x||`` at the critical exponent.

    At ``s = n/(n-2)`` (so ``p = n/2``, ``q = n``) the Hardy factor of the
    THM1 constant diverges; the critical ratio is therefore the raw
    ``lhs / rhs``. It must grow across levels while ``||Du||_n`` and
    ``||Delta u||_{n/2}`` settle, and the subcritical ``s = 2`` ratio on the
    same functions must stay below ``1 + allowance``.
    """
    if levels < 3:
        raise ValueError("levels too few to exhibit a trend (need at least 3)")
    cutoff = cutoff or CutoffSpec()
    n = cutoff.n
    s_crit = n / (n - 2)
    lap = ScalarDivForm.laplacian(n)
    sub_case = InequalityCase.thm1(n, 2.0) if 2.0 < s_crit else None
    shape = DomainShape(ShapeKind.BALL, cutoff.outer)
    rows, sub_ratios, du_bounds, lap_bounds = [], [], [], []
    for level in range(levels):
        nodes = (cutoff.base_nodes - 1) * 2**level + 1
        dom = build_domain(shape, nodes, n)
        h = dom.spacing
        u = counterexample_function(dom, cutoff)
        r = np.sqrt(np.sum(dom.coordinates() ** 2, axis=-1))
        far = dom.interior_mask & (r >= 4 * h)
        sup_far = float(np.max(np.abs(u.values[..., 0][far]))) if far.any() else 0.0
        lhs, rhs, norms = thm1_sides(lap, u, n, s_crit)
        crit = _ratio(lhs, rhs, 1.0)
        if sub_case is not None:
            sub_ratios.append(inequality_ratio(sub_case, lap, u).normalized_ratio)
        band = dom.interior_mask & (r >= 4 * h) & (r <= 0.25)
        if band.any():
            logr = np.abs(np.log(r[band]))
            du = np.sqrt(np.sum(gradient(u, 1).values ** 2, axis=-1))[band]
            lu = np.abs(apply(lap, u).values[..., 0])[band]
            du_bounds.append(float(np.max(du * r[band] * logr)))
            lap_bounds.append(float(np.max(lu * r[band] ** 2 * logr)))
        rows.append([level, h, sup_far, norms["Du_q"], norms["Lu_p"], crit])

    report = ExperimentReport(
        "counterexample",
        parameters={"levels": levels, "n": n, "s": s_crit, "inner": cutoff.inner,
                    "outer": cutoff.outer, "base_nodes": cutoff.base_nodes},
        columns=list(COUNTEREXAMPLE_COLUMNS),
        rows=rows,
    )
    crit = report.column("critical_ratio")
    sup = report.column("sup_u")

    def rel_diffs(col):
        vals = report.column(col)
        return [abs(b - a) / abs(b) for a, b in zip(vals, vals[1:])]

    d_du, d_lap = rel_diffs("du_l3"), rel_diffs("lap_l32")
    shrink = lambda d: all(b <= (1.0 - min_shrink) * a for a, b in zip(d, d[1:]))
    report.summary = {
        "critical_growth": crit[-1] / crit[0] if crit[0] > 0 else math.inf,
        "du_rel_diffs": d_du,
        "lap_rel_diffs": d_lap,
        "subcritical_ratios": sub_ratios,
        "du_pointwise_bound": du_bounds,
        "lap_pointwise_bound": lap_bounds,
    }
    report.checks = {
        "critical_ratio_increasing": all(b > a for a, b in zip(crit, crit[1:])),
        "critical_growth": report.summary["critical_growth"] >= min_growth,
        "sup_grows": sup[-1] > sup[0],
        "pointwise_bounded": max(du_bounds + lap_bounds, default=0.0) <= pointwise_limit,
        "du_differences_shrink": shrink(d_du),
        "lap_differences_shrink": shrink(d_lap),
        "subcritical_bounded": all(x <= 1.0 + allowance for x in sub_ratios),
    }
    return report
