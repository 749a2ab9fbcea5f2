"""Finite-difference realisations of the three operator families.

Every operator is described by a list of stencil terms and assembled into a
sparse matrix over the interior unknowns, ordered node-major (row-major over
interior nodes) and component-minor. :func:`apply` is the masked matvec of
that matrix, so the matrix and the grid-level action agree exactly.

* :class:`ScalarDivForm` -- ``-D_i(a_ij D_j u)``. Diagonal terms use face
  fluxes with arithmetic-mean face coefficients; cross terms ``i != j`` use
  centered differences ``-c_i(a_ij c_j u)`` with node coefficients, which keeps
  the matrix symmetric for symmetric ``a``.
* :class:`Lame3D` -- ``-Delta u - alpha grad div u`` with the 7-point
  Laplacian, three-point ``D_ii`` and the 4-point cross stencil for ``D_ki``.
* :class:`Polyharmonic` -- ``(-Delta_h)^m`` applied with the interior mask
  between factors.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .grid import GridDomain, GridFunction

log = logging.getLogger(__name__)

CoefficientField = Callable[[np.ndarray], np.ndarray]


class OperatorError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Iterative solve did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float, solution: np.ndarray | None = None):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual
        self.solution = solution


@dataclass(frozen=True, eq=False)
class ScalarDivForm:
    """``Lu = -D_i(a_ij(x) D_j u)``.

    ``coefficients`` maps coordinates of shape ``(..., n)`` to matrices of
    shape ``(..., n, n)``; ``None`` means the identity (``L = -Delta``).
    """

    n: int
    coefficients: CoefficientField | None = None
    lam: float = 1.0
    Lam: float = 1.0

    components = 1
    order = 1

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise OperatorError("ellipticity bounds need 0 < lambda <= Lambda")

    @classmethod
    def laplacian(cls, n: int) -> "ScalarDivForm":
        return cls(n)

    @classmethod
    def isotropic(cls, n: int, fn: Callable[[np.ndarray], np.ndarray], lam: float, Lam: float) -> "ScalarDivForm":
        """``a_ij = fn(x) delta_ij``."""

        def coef(X):
            return np.asarray(fn(X), dtype=float)[..., None, None] * np.eye(n)

        return cls(n, coef, lam, Lam)

    @classmethod
    def constant(cls, a: np.ndarray) -> "ScalarDivForm":
        a = np.asarray(a, dtype=float)
        eig = np.linalg.eigvalsh(0.5 * (a + a.T))

        def coef(X):
            return np.broadcast_to(a, X.shape[:-1] + a.shape)

        return cls(a.shape[0], coef, float(eig.min()), float(eig.max()))

    @property
    def is_laplacian(self) -> bool:
        return self.coefficients is None

    def coefficient_values(self, domain: GridDomain) -> np.ndarray:
        X = domain.coordinates()
        if self.coefficients is None:
            return np.broadcast_to(np.eye(self.n), X.shape[:-1] + (self.n, self.n))
        a = np.asarray(self.coefficients(X), dtype=float)
        if a.shape != X.shape[:-1] + (self.n, self.n):
            raise OperatorError(f"coefficient field returned shape {a.shape}")
        return a

    def is_symmetric(self, domain: GridDomain) -> bool:
        a = self.coefficient_values(domain)
        return bool(np.array_equal(a, np.swapaxes(a, -1, -2)))

    def check_ellipticity(self, domain: GridDomain, directions: int = 100, seed: int = 0) -> None:
        """Check ``lam |xi|^2 <= a_ij xi_i xi_j <= Lam |xi|^2`` at interior nodes."""
        a = self.coefficient_values(domain)[domain.interior_mask]
        xi = np.random.default_rng(seed).standard_normal((directions, self.n))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        form = np.einsum("ki,nij,kj->nk", xi, a, xi)
        slack = 1e-12 * self.Lam
        if form.min() < self.lam - slack or form.max() > self.Lam + slack:
            raise OperatorError(
                f"coefficient field violates ellipticity bounds: form range "
                f"[{form.min():.6g}, {form.max():.6g}] vs [{self.lam}, {self.Lam}]"
            )


@dataclass(frozen=True, eq=False)
class Lame3D:
    """``Lu = -Delta u - alpha grad div u`` in three dimensions."""

    alpha: float
    n = 3
    components = 3
    order = 1

    def __post_init__(self):
        if not self.alpha > -1:
            raise OperatorError(f"Lamé parameter must exceed -1, got {self.alpha}")

    @classmethod
    def from_poisson_ratio(cls, nu: float) -> "Lame3D":
        return cls(1.0 / (1.0 - 2.0 * nu))

    @property
    def poisson_ratio(self) -> float:
        return 0.5 * (1.0 - 1.0 / self.alpha) if self.alpha != 0 else -math.inf


@dataclass(frozen=True, eq=False)
class Polyharmonic:
    """``(-Delta)^m`` in ``R^n`` with ``n > 2m``."""

    m: int
    n: int
    components = 1

    def __post_init__(self):
        if self.m < 1 or not self.n > 2 * self.m:
            raise OperatorError(f"polyharmonic operator needs m >= 1 and n > 2m, got m={self.m}, n={self.n}")

    @property
    def order(self) -> int:
        return self.m


OperatorSpec = Union[ScalarDivForm, Lame3D, Polyharmonic]


def is_symmetric(op: OperatorSpec, domain: GridDomain) -> bool:
    if isinstance(op, ScalarDivForm):
        return op.is_symmetric(domain)
    return True


def _check(op: OperatorSpec, domain: GridDomain, components: int | None = None) -> None:
    if op.n != domain.dim:
        raise OperatorError(f"operator acts in R^{op.n} but the domain is {domain.dim}-dimensional")
    if components is not None and components != op.components:
        raise OperatorError(
            f"operator expects {op.components} component(s), got {components}"
        )


# -- stencil terms -----------------------------------------------------------
# A term is (out_component, in_component, offset, weight) where weight is a
# float or an array over all grid nodes (evaluated at the output node).

def _unit(n: int, axis: int, k: int = 1) -> tuple[int, ...]:
    e = [0] * n
    e[axis] = k
    return tuple(e)


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _laplacian_terms(n: int, h: float, comp: int = 0, scale: float = 1.0):
    terms = [(comp, comp, (0,) * n, scale * 2.0 * n / h**2)]
    for axis in range(n):
        for s in (-1, 1):
            terms.append((comp, comp, _unit(n, axis, s), -scale / h**2))
    return terms


def _scalar_terms(op: ScalarDivForm, domain: GridDomain):
    n, h = domain.dim, domain.spacing
    if op.is_laplacian:
        return _laplacian_terms(n, h)
    op.check_ellipticity(domain)
    a = op.coefficient_values(domain)
    terms = []
    center = np.zeros(domain.extents)
    for i in range(n):
        aii = a[..., i, i]
        face_plus = 0.5 * (aii + np.roll(aii, -1, axis=i))
        face_minus = 0.5 * (aii + np.roll(aii, 1, axis=i))
        center += (face_plus + face_minus) / h**2
        terms.append((0, 0, _unit(n, i, 1), -face_plus / h**2))
        terms.append((0, 0, _unit(n, i, -1), -face_minus / h**2))
    terms.append((0, 0, (0,) * n, center))
    for i, j in itertools.permutations(range(n), 2):
        aij = a[..., i, j]
        if not np.any(aij):
            continue
        for si in (-1, 1):
            # a_ij evaluated at the neighbour x + si e_i
            a_nb = np.roll(aij, -si, axis=i)
            for sj in (-1, 1):
                off = _add(_unit(n, i, si), _unit(n, j, sj))
                terms.append((0, 0, off, -si * sj * a_nb / (4.0 * h**2)))
    return terms


def _lame_terms(op: Lame3D, domain: GridDomain):
    n, h, alpha = 3, domain.spacing, op.alpha
    terms = []
    for i in range(3):
        terms.append((i, i, (0, 0, 0), (6.0 + 2.0 * alpha) / h**2))
        for k in range(3):
            w = -(1.0 + alpha) / h**2 if k == i else -1.0 / h**2
            for s in (-1, 1):
                terms.append((i, i, _unit(n, k, s), w))
        for k in range(3):
            if k == i:
                continue
            for sk in (-1, 1):
                for si in (-1, 1):
                    off = _add(_unit(n, k, sk), _unit(n, i, si))
                    terms.append((i, k, off, -alpha * sk * si / (4.0 * h**2)))
    return terms


def _build_matrix(domain: GridDomain, ncomp: int, terms) -> sp.csr_matrix:
    mask = domain.interior_mask
    rank = domain.interior_index()
    nodes = np.argwhere(mask)
    ext = np.array(domain.extents)
    rows, cols, vals = [], [], []
    row_rank = rank[mask]
    for out_c, in_c, off, w in terms:
        tgt = nodes + np.array(off)
        inb = np.all((tgt >= 0) & (tgt < ext), axis=1)
        tgt_rank = np.full(len(nodes), -1, dtype=np.int64)
        tgt_rank[inb] = rank[tuple(tgt[inb].T)]
        keep = tgt_rank >= 0
        if np.isscalar(w):
            wv = np.full(int(keep.sum()), float(w))
        else:
            wv = np.asarray(w)[mask][keep]
        nz = wv != 0.0
        rows.append(row_rank[keep][nz] * ncomp + out_c)
        cols.append(tgt_rank[keep][nz] * ncomp + in_c)
        vals.append(wv[nz])
    size = domain.n_interior * ncomp
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble(op: OperatorSpec, domain: GridDomain) -> sp.csr_matrix:
    """Sparse matrix of ``op`` on the interior unknowns of ``domain`` (cached)."""
    _check(op, domain)
    key = ("matrix", op)
    if key in domain._cache:
        return domain._cache[key]
    if isinstance(op, ScalarDivForm):
        A = _build_matrix(domain, 1, _scalar_terms(op, domain))
    elif isinstance(op, Lame3D):
        A = _build_matrix(domain, 3, _lame_terms(op, domain))
    elif isinstance(op, Polyharmonic):
        lap = laplacian_matrix(domain)
        A = lap
        for _ in range(op.m - 1):
            A = (A @ lap).tocsr()
        A.sort_indices()
    else:
        raise OperatorError(f"unknown operator {op!r}")
    domain._cache[key] = A
    return A


def laplacian_matrix(domain: GridDomain) -> sp.csr_matrix:
    key = ("laplacian",)
    if key not in domain._cache:
        domain._cache[key] = _build_matrix(domain, 1, _laplacian_terms(domain.dim, domain.spacing))
    return domain._cache[key]


def to_vector(u: GridFunction) -> np.ndarray:
    """Interior values, node-major and component-minor."""
    return np.ascontiguousarray(u.values[u.domain.interior_mask]).ravel()


def from_vector(domain: GridDomain, vec: np.ndarray, components: int) -> GridFunction:
    vals = np.zeros(domain.extents + (components,))
    vals[domain.interior_mask] = np.asarray(vec).reshape(-1, components)
    return GridFunction(domain, vals)


def apply(op: OperatorSpec, u: GridFunction) -> GridFunction:
    """Grid-level action of ``op``; the result vanishes off the interior."""
    dom = u.domain
    _check(op, dom, u.components)
    v = to_vector(u)
    if isinstance(op, Polyharmonic):
        lap = laplacian_matrix(dom)
        for _ in range(op.m):
            v = lap @ v
    else:
        v = assemble(op, dom) @ v
    return from_vector(dom, v, op.components)


def export_coo(A: sp.spmatrix, path) -> None:
    """Write ``A`` as ``%%EPL-COO rows cols nnz`` followed by ``i j value`` lines."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        fh.write(f"%%EPL-COO {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for k in order:
            fh.write(f"{C.row[k]} {C.col[k]} {C.data[k]:.17g}\n")


def import_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "%%EPL-COO":
            raise ValueError("not an EPL-COO file")
        rows, cols, nnz = (int(t) for t in header[1:4])
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(rows, cols)).tocsr()


# -- solvers -----------------------------------------------------------------

class SolveMethod(str, enum.Enum):
    CONJUGATE_GRADIENT = "cg"
    STABILIZED_BIORTHOGONAL = "bicgstab"


@dataclass(frozen=True)
class SolveConfig:
    rel_tolerance: float = 1e-10
    max_iterations: int = 20_000
    method: SolveMethod | None = None  # None: chosen from the operator's symmetry

    def __post_init__(self):
        if not 0 < self.rel_tolerance <= 1e-4:
            raise ValueError("rel_tolerance must lie in (0, 1e-4]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


class _Breakdown(Exception):
    pass


def _pcg(A, b, dinv, tol, maxiter):
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise _Breakdown("matrix is not positive definite")
        step = rz / pAp
        x += step * p
        r -= step * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            # confirm against the true residual before stopping
            r = b - A @ x
            if np.linalg.norm(r) <= tol * bnorm:
                return x, it
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter


def _bicgstab(A, b, dinv, tol, maxiter):
    x = np.zeros_like(b)
    r = b.copy()
    r_hat = b.copy()
    bnorm = np.linalg.norm(b)
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, maxiter + 1):
        rho_new = r_hat @ r
        if rho_new == 0:
            break
        beta = (rho_new / rho) * (alpha / omega)
        p = r + beta * (p - omega * v)
        y = dinv * p
        v = A @ y
        alpha = rho_new / (r_hat @ v)
        s = r - alpha * v
        if np.linalg.norm(s) <= tol * bnorm:
            x += alpha * y
            return x, it
        z = dinv * s
        t = A @ z
        omega = (t @ s) / (t @ t)
        x += alpha * y + omega * z
        r = s - omega * t
        rho = rho_new
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
    return x, maxiter


def solve_matrix(A: sp.spmatrix, b: np.ndarray, cfg: SolveConfig, symmetric: bool) -> np.ndarray:
    """Jacobi-preconditioned CG (symmetric) or BiCGSTAB solve of ``A x = b``."""
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b)
    dinv = 1.0 / A.diagonal()
    method = cfg.method or (
        SolveMethod.CONJUGATE_GRADIENT if symmetric else SolveMethod.STABILIZED_BIORTHOGONAL
    )
    x = None
    if method is SolveMethod.CONJUGATE_GRADIENT:
        try:
            x, iters = _pcg(A, b, dinv, cfg.rel_tolerance, cfg.max_iterations)
        except _Breakdown:
            log.warning("CG broke down; switching to BiCGSTAB")
            method = SolveMethod.STABILIZED_BIORTHOGONAL
    if method is SolveMethod.STABILIZED_BIORTHOGONAL:
        x, iters = _bicgstab(A, b, dinv, cfg.rel_tolerance, cfg.max_iterations)
    res = float(np.linalg.norm(b - A @ x) / np.linalg.norm(b))
    if res > cfg.rel_tolerance:
        raise ConvergenceError(f"{method.value} did not converge in {iters} iterations", res, x)
    log.debug("%s converged in %d iterations, residual %.3e", method.value, iters, res)
    return x


def solve_dirichlet(op: OperatorSpec, f: GridFunction, cfg: SolveConfig | None = None) -> GridFunction:
    """Solve ``apply(op, u) = f`` with zero values off the interior."""
    cfg = cfg or SolveConfig()
    dom = f.domain
    _check(op, dom, f.components)
    A = assemble(op, dom)
    x = solve_matrix(A, to_vector(f), cfg, is_symmetric(op, dom))
    return from_vector(dom, x, op.components)


def green_column(op: OperatorSpec, domain: GridDomain, y0: tuple[int, ...], cfg: SolveConfig | None = None):
    """Discrete Green's function with pole at node ``y0``.

    Solves ``apply(op, G) = delta_y0`` with the delta of mass one (value
    ``h^-n`` at ``y0``). Scalar operators return a :class:`GridFunction`;
    systems return a list with one column per unit vector at ``y0``.
    """
    _check(op, domain)
    y0 = tuple(int(i) for i in y0)
    if not domain.is_interior(y0):
        raise OperatorError(f"pole {y0} is not an interior node")
    key = ("green", op, y0, cfg)
    if key in domain._cache:
        return domain._cache[key]
    cols = []
    for c in range(op.components):
        vals = np.zeros(domain.extents + (op.components,))
        vals[y0 + (c,)] = 1.0 / domain.cell_volume
        cols.append(solve_dirichlet(op, GridFunction(domain, vals), cfg))
    out = cols[0] if op.components == 1 else cols
    domain._cache[key] = out
    return out
