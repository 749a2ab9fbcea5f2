"""Weighted quadratic forms, strong-positivity defects and extremal eigenvalues.

The weighted form of an operator ``L`` with weight ``Psi`` centred at node
``x0`` is the midpoint sum

    Q(u) = sum_y (Lu)_i(y) Psi_ij(x0 - y) u_j(y) h^n

over interior nodes, skipping nodes where a closed-form weight is singular.
Restricted to test functions that vanish on a punctured ball around ``x0``,
``Q`` is a quadratic form on the admissible node values; its symmetric part
is the matrix searched by :func:`min_rayleigh`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .fundsol import WeightEvaluator, WeightKind
from .grid import GridDomain, GridFunction, gradient, integrate, multi_indices, multiplicity
from .operators import Lame3D, OperatorSpec, Polyharmonic, ScalarDivForm, SolveConfig, apply, assemble, green_column

log = logging.getLogger(__name__)

DEFAULT_PUNCTURE_CELLS = 2
ZERO_TOL = 1e-6
START_SEED = 20240101


class EigenSearchError(RuntimeError):
    def __init__(self, message: str, best_estimate: float | None = None):
        super().__init__(message if best_estimate is None else f"{message} (best estimate {best_estimate:.6g})")
        self.best_estimate = best_estimate


class ThresholdBracketError(ValueError):
    pass


@dataclass(frozen=True)
class PunctureSpec:
    """Ball of ``radius_cells * h`` around node ``center`` where test functions vanish."""

    center: tuple[int, ...]
    radius_cells: int = DEFAULT_PUNCTURE_CELLS

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(int(i) for i in self.center))
        if self.radius_cells < 1:
            raise ValueError("puncture radius must be at least one cell")

    def mask(self, domain: GridDomain) -> np.ndarray:
        for i, e in zip(self.center, domain.extents):
            if i - self.radius_cells < 0 or i + self.radius_cells > e - 1:
                raise ValueError("punctured ball does not fit inside the grid")
        return domain.distance_from(self.center) < self.radius_cells * domain.spacing * (1 - 1e-12)

    def admissible(self, domain: GridDomain) -> np.ndarray:
        return domain.interior_mask & ~self.mask(domain)


@dataclass
class FormReport:
    form_value: float
    pointwise_term: float
    strong_terms: list[float]
    c: float
    defect: float
    admissible_dim: int

    def as_dict(self) -> dict:
        return {
            "form_value": self.form_value,
            "pointwise_term": self.pointwise_term,
            "strong_terms": list(self.strong_terms),
            "c": self.c,
            "defect": self.defect,
            "admissible_dim": self.admissible_dim,
        }


@dataclass
class RayleighResult:
    value: float
    residual: float
    matvecs: int
    admissible_dim: int
    vector: np.ndarray = field(repr=False)


def _skip_mask(w: WeightEvaluator, domain: GridDomain, x0) -> np.ndarray:
    if w.kind is WeightKind.DISCRETE_GREEN:
        return np.zeros(domain.extents, dtype=bool)
    return domain.distance_from(x0) < max(w.rho, 0.5 * domain.spacing)


def _contract(Lu: np.ndarray, W: np.ndarray, u: np.ndarray, matrix: bool) -> np.ndarray:
    if matrix:
        return np.einsum("...i,...ij,...j->...", Lu, W, u)
    return np.sum(Lu * u, axis=-1) * W


def weighted_form(op: OperatorSpec, w: WeightEvaluator, u: GridFunction, x0) -> float:
    """``Q = sum_y (Lu)_i(y) Psi_ij(x0 - y) u_j(y) h^n``.

    Nodes with ``|x0 - y| < max(rho, h/2)`` are skipped for closed-form
    weights, so ``u`` need not vanish at ``x0`` (the whole-space form).
    """
    dom = u.domain
    x0 = tuple(int(i) for i in x0)
    if w.is_matrix and u.components != 3:
        raise ValueError("matrix weights need three-component functions")
    skip = _skip_mask(w, dom, x0)
    W = w.on_grid(dom, x0, skip)
    if not np.all(np.isfinite(W)):
        raise ValueError("weight is singular at an unskipped node")
    Lu = apply(op, u).values
    dens = _contract(Lu, W, u.values, w.is_matrix)
    return integrate(dens[dom.interior_mask & ~skip], dom)


def _strong_term(u: GridFunction, w: WeightEvaluator, x0, k: int, m: int, lame: bool) -> float:
    dom = u.domain
    skip = _skip_mask(w, dom, x0)
    r = dom.distance_from(x0)
    g = gradient(u, k).values
    if k > 1:
        weights = np.array([multiplicity(b) for b in multi_indices(dom.dim, k)] * u.components, dtype=float)
        sq = np.sum(g * g * weights, axis=-1)
    else:
        sq = np.sum(g * g, axis=-1)
    keep = dom.interior_mask & ~skip
    if lame:
        dens = sq[keep] / r[keep]
    else:
        diff = dom.node_position(x0) - dom.coordinates()[keep]
        dens = sq[keep] * r[keep] ** (2 * k - 2 * m) * w.frobenius(diff)
    return integrate(dens, dom)


def strong_defect(op: OperatorSpec, w: WeightEvaluator, u: GridFunction, x0, c: float) -> FormReport:
    """Decompose ``Q`` into ``1/2 |u(x0)|^2 + c * sum_k strong_k + defect``.

    The Lamé strong term is ``int |Du|^2 |x0 - y|^-1``; other operators use
    ``int |D^k u|^2 |x0 - y|^(2k - 2m) |Psi|`` with the Frobenius norm of the
    weight.
    """
    x0 = tuple(int(i) for i in x0)
    m = op.m if isinstance(op, Polyharmonic) else 1
    lame = isinstance(op, Lame3D)
    Q = weighted_form(op, w, u, x0)
    point = 0.5 * float(np.sum(u.values[x0] ** 2))
    terms = [_strong_term(u, w, x0, k, m, lame) for k in range(1, m + 1)]
    defect = Q - point - c * math.fsum(terms)
    return FormReport(Q, point, terms, c, defect, u.domain.n_interior)


def scalar_weighted_identity_check(
    op: ScalarDivForm, u: GridFunction, x0, n: int, cfg: SolveConfig | None = None
) -> float:
    """``int Lu G(x0, .) u |u|^(n-3) dy - |u(x0)|^(n-1) / (n-1)`` with the discrete Green column.

    Nonnegative up to discretization error for every zero-trace scalar
    ``u``; no node is skipped since ``G`` is finite at its pole.
    """
    if n < 3:
        raise ValueError("the identity needs n >= 3")
    if not isinstance(op, ScalarDivForm):
        raise TypeError("the identity applies to scalar divergence-form operators")
    dom = u.domain
    if n != dom.dim:
        raise ValueError("n must equal the grid dimension")
    if u.components != 1:
        raise ValueError("u must be scalar")
    x0 = tuple(int(i) for i in x0)
    if not dom.is_interior(x0):
        raise ValueError("x0 must be an interior node")
    G = green_column(op, dom, x0, cfg).values[..., 0]
    v = u.values[..., 0]
    Lu = apply(op, u).values[..., 0]
    dens = Lu * G * v * np.abs(v) ** (n - 3)
    return integrate(dens[dom.interior_mask], dom) - abs(v[x0]) ** (n - 1) / (n - 1)


def form_matrix(op: OperatorSpec, w: WeightEvaluator, domain: GridDomain, punct: PunctureSpec):
    """Symmetrised form matrix on admissible unknowns.

    Returns ``(M_s, admissible)`` with ``vec(u)^T M_s vec(u) = weighted_form``
    for every ``u`` supported on the ``admissible`` node mask; ``vec`` lists
    admissible nodes row-major, components minor.
    """
    x0 = punct.center
    adm = punct.admissible(domain)
    skip = _skip_mask(w, domain, x0)
    adm &= ~skip
    if not adm.any():
        raise ValueError("admissible space is empty")
    ncomp = op.components
    A = assemble(op, domain)
    W = w.on_grid(domain, x0, ~adm)[domain.interior_mask]
    nint = domain.n_interior
    if w.is_matrix:
        base = np.arange(nint) * 3
        rows = np.repeat(base, 9) + np.tile(np.repeat(np.arange(3), 3), nint)
        cols = np.repeat(base, 9) + np.tile(np.tile(np.arange(3), 3), nint)
        Wm = sp.csr_matrix((W.reshape(-1), (rows, cols)), shape=(3 * nint, 3 * nint))
    else:
        Wm = sp.diags(np.repeat(W, ncomp))
    keep = np.flatnonzero(np.repeat(adm[domain.interior_mask], ncomp))
    M = (Wm @ A).tocsr()[keep][:, keep]
    Ms = (0.5 * domain.cell_volume) * (M + M.T)
    return Ms.tocsr(), adm


def min_rayleigh(
    op: OperatorSpec,
    w: WeightEvaluator,
    domain: GridDomain,
    punct: PunctureSpec,
    iters: int = 20_000,
    v0: np.ndarray | None = None,
    tol: float = 1e-8,
) -> RayleighResult:
    """Smallest eigenvalue of the symmetrised weighted form over admissible ``u``.

    The Rayleigh quotient is ``Q(u) / ||u||_{L^2}^2``. The extremal
    eigenvalue is found with implicitly restarted Lanczos (ARPACK) from the
    deterministic start ``v0``; ``iters`` caps the
    Lanczos restarts.
    """
    Ms, adm = form_matrix(op, w, domain, punct)
    S = Ms / domain.cell_volume
    size = S.shape[0]
    if v0 is None:
        # a seeded generic vector: symmetric starts stay inside one symmetry class
        v0 = np.random.default_rng(START_SEED).standard_normal(size)
    count = [0]

    def mv(x):
        count[0] += 1
        return S @ x

    if size <= 2:
        vals, vecs = np.linalg.eigh(S.toarray())
        lam, vec = float(vals[0]), vecs[:, 0]
    else:
        lin = sla.LinearOperator(S.shape, matvec=mv, dtype=float)
        try:
            vals, vecs = sla.eigsh(lin, k=1, which="SA", v0=np.asarray(v0, dtype=float), tol=0.0, maxiter=iters)
        except sla.ArpackNoConvergence as exc:
            best = float(exc.eigenvalues[0]) if len(exc.eigenvalues) else None
            raise EigenSearchError("extremal eigenvalue iteration stagnated", best) from exc
        lam, vec = float(vals[0]), vecs[:, 0]
    vec = vec / np.linalg.norm(vec)
    residual = float(np.linalg.norm(S @ vec - lam * vec))
    if residual > tol * max(1.0, abs(lam)):
        raise EigenSearchError(f"eigen-residual {residual:.3e} above {tol:g}", lam)
    return RayleighResult(lam, residual, count[0], size, vec)


@dataclass
class SweepRow:
    alpha: float
    min_eig: float
    grid: int
    puncture: int
    iters: int
    residual: float

    CSV_HEADER = "alpha,min_eig,grid,puncture,iters,residual"

    def csv(self) -> str:
        return f"{self.alpha:.17g},{self.min_eig:.17g},{self.grid},{self.puncture},{self.iters},{self.residual:.17g}"


def lame_min_eig(alpha: float, domain: GridDomain, punct: PunctureSpec) -> RayleighResult:
    return min_rayleigh(Lame3D(alpha), WeightEvaluator.lame(alpha), domain, punct)


def threshold_bisect(
    domain: GridDomain,
    bracket: tuple[float, float],
    rising: bool,
    tol_alpha: float,
    radius_cells: int = DEFAULT_PUNCTURE_CELLS,
    zero_tol: float = ZERO_TOL,
    rows: list[SweepRow] | None = None,
) -> float:
    """Bisect one edge of the Lamé positivity window on the sign of the minimum eigenvalue.

    ``rising`` means the sign goes from negative at ``bracket[0]`` to
    nonnegative at ``bracket[1]`` (lower edge); otherwise the reverse. Only
    the sign is used: the form depends on ``alpha`` through both the
    operator and the weight. Every evaluation is appended to ``rows``.
    """
    if domain.dim != 3:
        raise ValueError("the Lamé window search needs a 3D domain")
    if tol_alpha <= 0:
        raise ValueError("tol_alpha must be positive")
    a, b = (float(x) for x in bracket)
    if not -1.0 < a < b:
        raise ValueError("bracket must satisfy -1 < lo < hi")
    punct = PunctureSpec(domain.center_node(), radius_cells)
    rows = [] if rows is None else rows
    grid = domain.extents[0]

    def nonneg(alpha: float) -> bool:
        res = lame_min_eig(alpha, domain, punct)
        rows.append(SweepRow(alpha, res.value, grid, radius_cells, res.matvecs, res.residual))
        log.info("alpha=%.6g min_eig=%.6g", alpha, res.value)
        return res.value >= -zero_tol

    sign_a = not rising
    if nonneg(a) != sign_a or nonneg(b) == sign_a:
        raise ThresholdBracketError(f"bracket [{a:g}, {b:g}] does not straddle threshold at this resolution")
    while b - a > tol_alpha:
        mid = 0.5 * (a + b)
        if nonneg(mid) == sign_a:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def alpha_threshold_search(
    domain: GridDomain,
    bracket_lo: tuple[float, float],
    bracket_hi: tuple[float, float],
    tol_alpha: float,
    radius_cells: int = DEFAULT_PUNCTURE_CELLS,
    zero_tol: float = ZERO_TOL,
) -> tuple[float, float, list[SweepRow]]:
    """Estimate both edges of the Lamé positivity window.

    ``bracket_lo`` must run from a negative to a nonnegative minimum
    eigenvalue, ``bracket_hi`` from nonnegative to negative.
    """
    rows: list[SweepRow] = []
    lo = threshold_bisect(domain, bracket_lo, True, tol_alpha, radius_cells, zero_tol, rows)
    hi = threshold_bisect(domain, bracket_hi, False, tol_alpha, radius_cells, zero_tol, rows)
    return lo, hi, rows
