"""Masked uniform grids, grid functions, finite differences and discrete norms.

A :class:`GridDomain` is a box of ``extents`` nodes with spacing ``h``; the
boolean ``interior_mask`` marks the nodes that belong to the open set. Every
node on the outer layer of the box is non-interior, and a :class:`GridFunction`
is identically zero off the interior, which is the discrete zero-trace
condition.

All integrals use the node-wise midpoint weight ``h**n`` and are accumulated
in row-major node order with :func:`math.fsum`.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MIN_DIM = 3
MAX_DIM = 7
MIN_NODES = 5
MAX_DERIVATIVE_ORDER = 4
SURFACE_TOL = 1e-10


class DomainError(ValueError):
    """Raised for invalid or degenerate grid domains."""


class ShapeKind(str, enum.Enum):
    BALL = "ball"
    CUBE = "cube"
    L_SHAPE = "lshape"
    SLIT_CUBE = "slit"


@dataclass(frozen=True)
class DomainShape:
    """Geometric description of the continuous region.

    ``size`` is the radius for BALL and the side length for the cube-based
    kinds. ``notch`` is the fraction of the side removed from the corner of an
    L-shape (the notch is the set ``x1 >= t, x2 >= t``); ``slit_width`` is the
    thickness of the planar crack ``|x2| <= w/2, x1 >= 0`` in a SLIT_CUBE.
    """

    kind: ShapeKind = ShapeKind.BALL
    size: float = 1.0
    notch: float = 0.5
    slit_width: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        if not (self.size > 0 and self.notch > 0 and self.slit_width > 0):
            raise DomainError("shape parameters must be strictly positive")
        if self.notch >= 1:
            raise DomainError("notch fraction must be below 1")

    @property
    def half_width(self) -> float:
        if self.kind is ShapeKind.BALL:
            return self.size
        return 0.5 * self.size

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Strict point-in-shape test for points ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        L = self.half_width
        # points within roundoff of the surface count as boundary points
        eps = SURFACE_TOL * L
        if self.kind is ShapeKind.BALL:
            return np.sqrt(np.sum(x * x, axis=-1)) < self.size - eps
        inside = np.all(np.abs(x) < L - eps, axis=-1)
        if self.kind is ShapeKind.L_SHAPE:
            t = L - 2.0 * L * self.notch
            inside &= ~((x[..., 0] >= t - eps) & (x[..., 1] >= t - eps))
        elif self.kind is ShapeKind.SLIT_CUBE:
            inside &= ~((np.abs(x[..., 1]) <= 0.5 * self.slit_width + eps) & (x[..., 0] >= -eps))
        return inside

    def boundary_distance(self, x: np.ndarray) -> np.ndarray:
        """Distance from interior points ``x`` to the shape boundary.

        Returns a non-positive value for points outside the shape.
        """
        x = np.asarray(x, dtype=float)
        L = self.half_width
        if self.kind is ShapeKind.BALL:
            d = self.size - np.sqrt(np.sum(x * x, axis=-1))
        else:
            d = np.min(L - np.abs(x), axis=-1)
        if self.kind is ShapeKind.L_SHAPE:
            t = L - 2.0 * L * self.notch
            dx = np.maximum(t - x[..., 0], 0.0)
            dy = np.maximum(t - x[..., 1], 0.0)
            d = np.minimum(d, np.hypot(dx, dy))
        elif self.kind is ShapeKind.SLIT_CUBE:
            w = 0.5 * self.slit_width
            dy = np.maximum(np.abs(x[..., 1]) - w, 0.0)
            dx = np.maximum(-x[..., 0], 0.0)
            d = np.minimum(d, np.hypot(dx, dy))
        return np.where(self.contains(x), d, np.minimum(d, 0.0))


@dataclass(frozen=True, eq=False)
class GridDomain:
    dim: int
    extents: tuple[int, ...]
    spacing: float
    origin: tuple[float, ...]
    interior_mask: np.ndarray
    shape: DomainShape | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        extents = tuple(int(e) for e in self.extents)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if not MIN_DIM <= self.dim <= MAX_DIM:
            raise DomainError(f"dimension must lie in [{MIN_DIM}, {MAX_DIM}], got {self.dim}")
        if len(extents) != self.dim or len(self.origin) != self.dim:
            raise DomainError("extents and origin must have one entry per axis")
        if min(extents) < MIN_NODES:
            raise DomainError(f"every axis needs at least {MIN_NODES} nodes")
        if not self.spacing > 0:
            raise DomainError("spacing must be positive")
        mask = np.array(self.interior_mask, dtype=bool)
        if mask.shape != extents:
            raise DomainError("interior mask shape does not match extents")
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            for layer in (0, -1):
                idx[axis] = layer
                mask[tuple(idx)] = False
        if not mask.any():
            raise DomainError("degenerate domain")
        mask.flags.writeable = False
        object.__setattr__(self, "interior_mask", mask)

    @property
    def h(self) -> float:
        return self.spacing

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def n_interior(self) -> int:
        return int(self.interior_mask.sum())

    def axes(self) -> list[np.ndarray]:
        return [o + self.spacing * np.arange(e) for o, e in zip(self.origin, self.extents)]

    def coordinates(self) -> np.ndarray:
        """Node coordinates as an array of shape ``extents + (dim,)``."""
        key = "coordinates"
        if key not in self._cache:
            grids = np.meshgrid(*self.axes(), indexing="ij")
            X = np.stack(grids, axis=-1)
            X.flags.writeable = False
            self._cache[key] = X
        return self._cache[key]

    def node_position(self, index: Sequence[int]) -> np.ndarray:
        return np.array(self.origin) + self.spacing * np.asarray(index, dtype=float)

    def nearest_node(self, x: Sequence[float]) -> tuple[int, ...]:
        idx = np.rint((np.asarray(x, dtype=float) - np.array(self.origin)) / self.spacing)
        return tuple(int(np.clip(i, 0, e - 1)) for i, e in zip(idx, self.extents))

    def center_node(self) -> tuple[int, ...]:
        return tuple(e // 2 for e in self.extents)

    def distance_from(self, index: Sequence[int]) -> np.ndarray:
        """Euclidean distance of every node to node ``index``."""
        x0 = self.node_position(index)
        d = self.coordinates() - x0
        return np.sqrt(np.sum(d * d, axis=-1))

    def is_interior(self, index: Sequence[int]) -> bool:
        return bool(self.interior_mask[tuple(index)])

    def interior_index(self) -> np.ndarray:
        """Map from node to its rank among interior nodes (row-major), -1 elsewhere."""
        key = "interior_index"
        if key not in self._cache:
            rank = np.full(self.extents, -1, dtype=np.int64)
            rank[self.interior_mask] = np.arange(self.n_interior)
            rank.flags.writeable = False
            self._cache[key] = rank
        return self._cache[key]

    def boundary_distance(self, index: Sequence[int]) -> float:
        """Distance from node ``index`` to the nearest non-interior node."""
        d = self.distance_from(index)
        return float(d[~self.interior_mask].min())


def build_domain(shape: DomainShape, nodes_per_axis: int, dim: int) -> GridDomain:
    """Mask a uniform grid spanning the bounding box ``[-L, L]**dim`` of ``shape``.

    Examples
    --------
    >>> dom = build_domain(DomainShape(ShapeKind.CUBE, 1.0), 9, 3)
    >>> dom.n_interior
    343
    """
    if nodes_per_axis < MIN_NODES:
        raise DomainError(f"nodes_per_axis must be at least {MIN_NODES}")
    if not MIN_DIM <= dim <= MAX_DIM:
        raise DomainError(f"dimension must lie in [{MIN_DIM}, {MAX_DIM}], got {dim}")
    L = shape.half_width
    h = 2.0 * L / (nodes_per_axis - 1)
    axis = -L + h * np.arange(nodes_per_axis)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    X = np.stack(grids, axis=-1)
    mask = shape.contains(X)
    inner = np.zeros_like(mask)
    inner[(slice(1, -1),) * dim] = True
    mask &= inner
    if not mask.any():
        raise DomainError("degenerate domain")
    return GridDomain(dim, (nodes_per_axis,) * dim, h, (-L,) * dim, mask, shape)


class GridFunction:
    """Scalar or vector node data on a :class:`GridDomain`.

    ``values`` has shape ``domain.extents + (components,)``. Values off the
    interior must be exactly zero; use :meth:`masked` to build one from
    arbitrary data.
    """

    __slots__ = ("domain", "values")

    def __init__(self, domain: GridDomain, values: np.ndarray):
        values = np.array(values, dtype=np.float64)
        if values.shape == domain.extents:
            values = values[..., None]
        if values.shape[:-1] != domain.extents or values.ndim != domain.dim + 1:
            raise ValueError(
                f"values of shape {values.shape} do not fit extents {domain.extents}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        if np.any(values[~domain.interior_mask] != 0.0):
            raise ValueError("grid function must vanish on non-interior nodes")
        values.flags.writeable = False
        self.domain = domain
        self.values = values

    @classmethod
    def masked(cls, domain: GridDomain, values: np.ndarray) -> "GridFunction":
        values = np.array(values, dtype=np.float64)
        if values.shape == domain.extents:
            values = values[..., None]
        values[~domain.interior_mask] = 0.0
        return cls(domain, values)

    @classmethod
    def zeros(cls, domain: GridDomain, components: int = 1) -> "GridFunction":
        return cls(domain, np.zeros(domain.extents + (components,)))

    @classmethod
    def from_callable(cls, domain: GridDomain, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample ``fn`` (acting on coordinates of shape ``(..., n)``) at interior nodes."""
        X = domain.coordinates()
        out = np.asarray(fn(X[domain.interior_mask]), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        vals = np.zeros(domain.extents + (out.shape[-1],))
        vals[domain.interior_mask] = out
        return cls(domain, vals)

    @property
    def components(self) -> int:
        return self.values.shape[-1]

    def magnitude(self) -> np.ndarray:
        """Node-wise Euclidean norm over components."""
        if self.components == 1:
            return np.abs(self.values[..., 0])
        return np.sqrt(np.sum(self.values * self.values, axis=-1))

    def component(self, i: int) -> "GridFunction":
        return GridFunction(self.domain, self.values[..., i : i + 1])

    def _check_compatible(self, other: "GridFunction"):
        if other.domain is not self.domain or other.components != self.components:
            raise ValueError("grid functions live on different domains or component counts")

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check_compatible(other)
        return GridFunction(self.domain, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check_compatible(other)
        return GridFunction(self.domain, self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.domain, float(c) * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.domain, -self.values)

    def __repr__(self) -> str:
        return f"GridFunction(extents={self.domain.extents}, components={self.components})"


def integrate(values: np.ndarray, domain: GridDomain) -> float:
    """Midpoint-rule integral of node data (any trailing shape is summed too)."""
    return math.fsum(np.ravel(values, order="C").tolist()) * domain.cell_volume


def lp_norm(u: GridFunction, p: float) -> float:
    """Discrete ``L^p`` norm with node-wise Euclidean magnitude.

    ``p = inf`` returns the maximum magnitude.
    """
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mag = u.magnitude()
    if math.isinf(p):
        return float(mag.max())
    mag = mag[u.domain.interior_mask]
    if p == 2:
        s = integrate(mag * mag, u.domain)
    elif p == 1:
        s = integrate(mag, u.domain)
    else:
        s = integrate(mag**p, u.domain)
    return s ** (1.0 / p)


# -- finite differences ------------------------------------------------------

def multi_indices(n: int, k: int) -> list[tuple[int, ...]]:
    """Multi-indices ``beta`` with ``|beta| = k``, lexicographically descending.

    >>> multi_indices(3, 1)
    [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    """
    out = [b for b in itertools.product(range(k, -1, -1), repeat=n) if sum(b) == k]
    return sorted(out, reverse=True)


def multiplicity(beta: Sequence[int]) -> int:
    """Number of ordered index tuples realising ``beta`` (``k! / beta!``)."""
    m = math.factorial(sum(beta))
    for b in beta:
        m //= math.factorial(b)
    return m


_CENTERED = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


def _one_sided(order: int, sign: int):
    offsets = tuple(sign * i for i in range(order + 1))
    if sign > 0:
        coefs = tuple(float((-1) ** (order - i) * math.comb(order, i)) for i in range(order + 1))
    else:
        coefs = tuple(float((-1) ** i * math.comb(order, i)) for i in range(order + 1))
    return offsets, coefs


def shift(a: np.ndarray, axis: int, k: int) -> np.ndarray:
    """Return ``b`` with ``b[i] = a[i + k]`` along ``axis``, zero-filled."""
    if k == 0:
        return a
    b = np.zeros_like(a)
    n = a.shape[axis]
    if abs(k) >= n:
        return b
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k > 0:
        src[axis] = slice(k, None)
        dst[axis] = slice(None, n - k)
    else:
        src[axis] = slice(None, n + k)
        dst[axis] = slice(-k, None)
    b[tuple(dst)] = a[tuple(src)]
    return b


def _stencil_plan(domain: GridDomain, axis: int, order: int):
    """Per-node stencil choice for one axis derivative.

    Returns a list of ``(selector, offsets, coefs)`` triples whose selectors
    partition the interior: centered where the whole stencil is interior,
    else forward, else backward, else centered with the zero-trace values.
    """
    key = ("plan", axis, order)
    if key in domain._cache:
        return domain._cache[key]
    mask = domain.interior_mask
    candidates = [_CENTERED[order], _one_sided(order, +1), _one_sided(order, -1)]
    remaining = mask.copy()
    plan = []
    for offsets, coefs in candidates:
        ok = remaining.copy()
        for o in offsets:
            ok &= shift(mask, axis, o)
        plan.append((ok, offsets, coefs))
        remaining &= ~ok
    plan.append((remaining, *_CENTERED[order]))
    domain._cache[key] = plan
    return plan


def _axis_derivative(a: np.ndarray, domain: GridDomain, axis: int, order: int) -> np.ndarray:
    out = np.zeros_like(a)
    scale = domain.spacing**order
    for sel, offsets, coefs in _stencil_plan(domain, axis, order):
        if not sel.any():
            continue
        acc = np.zeros_like(a)
        for o, c in zip(offsets, coefs):
            acc += c * shift(a, axis, o)
        out[sel] = acc[sel] / scale
    return out


def gradient(u: GridFunction, k: int = 1) -> GridFunction:
    """All order-``k`` partial derivatives ``D^beta u``.

    Components are ordered component-major over ``u`` and then by
    :func:`multi_indices`. Mixed derivatives are products of one-axis
    stencils; a one-axis stencil is centered (second order) where all of its
    nodes are interior and one-sided (first order) otherwise.
    """
    if not 1 <= k <= MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order must lie in [1, {MAX_DERIVATIVE_ORDER}], got {k}")
    dom = u.domain
    betas = multi_indices(dom.dim, k)
    out = np.zeros(dom.extents + (u.components * len(betas),))
    col = 0
    for c in range(u.components):
        base = u.values[..., c]
        for beta in betas:
            d = base
            for axis, order in enumerate(beta):
                if order:
                    d = _axis_derivative(d, dom, axis, order)
            out[..., col] = d
            col += 1
    out[~dom.interior_mask] = 0.0
    return GridFunction(dom, out)


def sobolev_seminorm(u: GridFunction, k: int, q: float) -> float:
    """``||D^k u||_{L^q}`` with ``|D^k u|`` the full tensor (Frobenius) norm.

    Each distinct ``D^beta u`` is weighted by the number of ordered index
    tuples it represents, so for ``k = 1`` this is the usual gradient norm.
    """
    g = gradient(u, k)
    if k > 1:
        weights = np.sqrt([multiplicity(b) for b in multi_indices(u.domain.dim, k)] * u.components)
        g = GridFunction(u.domain, g.values * weights)
    return lp_norm(g, q)
