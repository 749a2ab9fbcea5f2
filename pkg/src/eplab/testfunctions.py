"""Seeded smooth test functions with compact support inside a domain."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .grid import GridDomain, GridFunction

MAX_TRIES = 2000


class TestFunctionKind(str, enum.Enum):
    __test__ = False

    RADIAL_BUMP = "radial_bump"
    SUM_OF_BUMPS = "sum_of_bumps"
    POLY_TIMES_CUTOFF = "poly_times_cutoff"


class SupportError(ValueError):
    """The requested support does not fit inside the domain."""


@dataclass(frozen=True)
class TestFunctionSpec:
    """Recipe for :func:`generate_test_function`.

    Bumps are ``(1 - |x - c|^2 / R^2)_+^p`` with ``p = smoothness``, which
    vanish to order ``p`` at the edge of their support. ``center`` and
    ``radius`` fix a single RADIAL_BUMP; otherwise centers and radii are
    drawn from ``seed``. ``margin`` is the clearance (length units) between
    random supports and the boundary, ``2h`` by default. ``radius_range``
    is relative to the half-width of the domain's bounding box.
    """

    __test__ = False

    kind: TestFunctionKind = TestFunctionKind.SUM_OF_BUMPS
    seed: int = 0
    count: int = 3
    components: int = 1
    smoothness: int = 3
    center: tuple[float, ...] | None = None
    radius: float | None = None
    margin: float | None = None
    radius_range: tuple[float, float] = (0.2, 0.6)

    def __post_init__(self):
        object.__setattr__(self, "kind", TestFunctionKind(self.kind))
        if self.count < 1 or self.components < 1:
            raise ValueError("count and components must be positive")
        if self.smoothness < 1:
            raise ValueError("smoothness order must be at least 1")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("invalid radius range")


def bump(X: np.ndarray, center: np.ndarray, radius: float, power: int) -> np.ndarray:
    s = np.sum((X - center) ** 2, axis=-1) / radius**2
    return np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** power, 0.0)


def _half_width(domain: GridDomain) -> float:
    return 0.5 * domain.spacing * (max(domain.extents) - 1)


def _domain_clearance(domain: GridDomain, c: np.ndarray) -> float:
    if domain.shape is not None:
        return float(domain.shape.boundary_distance(c))
    idx = domain.nearest_node(c)
    if not domain.is_interior(idx):
        return 0.0
    return domain.boundary_distance(idx)


def _draw_support(domain: GridDomain, rng: np.random.Generator, spec: TestFunctionSpec):
    L = _half_width(domain)
    margin = 2.0 * domain.spacing if spec.margin is None else spec.margin
    lo, hi = spec.radius_range
    mid = np.array(domain.origin) + L
    for _ in range(MAX_TRIES):
        R = L * rng.uniform(lo, hi)
        reach = L - R - margin
        if reach < 0:
            continue
        c = mid + rng.uniform(-reach, reach, size=domain.dim)
        if _domain_clearance(domain, c) >= R + margin:
            return c, R
    raise SupportError("support does not fit: no admissible bump position found")


def _check_support(u: np.ndarray, domain: GridDomain) -> None:
    if np.any(u[~domain.interior_mask] != 0.0):
        raise SupportError("support does not fit inside the interior")


def generate_test_function(domain: GridDomain, spec: TestFunctionSpec) -> GridFunction:
    """Deterministic smooth test function for ``spec`` on ``domain``."""
    X = domain.coordinates()
    rng = np.random.default_rng(spec.seed)
    vals = np.zeros(domain.extents + (spec.components,))
    p = spec.smoothness
    if spec.kind is TestFunctionKind.RADIAL_BUMP:
        if spec.radius is not None:
            c = np.zeros(domain.dim) if spec.center is None else np.asarray(spec.center, dtype=float)
            R = float(spec.radius)
            if _domain_clearance(domain, c) < R * (1 - 1e-12):
                raise SupportError("support does not fit: bump leaves the domain")
        else:
            c, R = _draw_support(domain, rng, spec)
        b = bump(X, c, R, p)
        for k in range(spec.components):
            amp = 1.0 if spec.radius is not None else rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0])
            vals[..., k] = amp * b
    elif spec.kind is TestFunctionKind.SUM_OF_BUMPS:
        for _ in range(spec.count):
            c, R = _draw_support(domain, rng, spec)
            b = bump(X, c, R, p)
            amps = rng.uniform(0.5, 1.5, size=spec.components) * rng.choice([-1.0, 1.0], size=spec.components)
            vals += b[..., None] * amps
    else:
        c, R = _draw_support(domain, rng, spec)
        b = bump(X, c, R, p)
        y = (X - c) / R
        for k in range(spec.components):
            lin = rng.normal(size=domain.dim)
            quad = rng.normal(size=(domain.dim, domain.dim))
            poly = 1.0 + y @ lin + np.einsum("...i,ij,...j->...", y, 0.5 * quad, y)
            vals[..., k] = poly * b
    _check_support(vals, domain)
    vals[~domain.interior_mask] = 0.0
    return GridFunction(domain, vals)
