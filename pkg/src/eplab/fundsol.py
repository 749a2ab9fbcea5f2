"""Closed-form fundamental solutions used as weights.

Conventions: ``L = -Delta`` has fundamental solution
``[(n-2) w_n]^{-1} |x|^{2-n}``, the biharmonic ``Delta^2`` in ``n = 5, 6, 7``
has ``[2(n-2)(n-4) w_n]^{-1} |x|^{4-n}``, and the Lamé operator
``-Delta u - alpha grad div u`` has the Kelvin matrix
``c_alpha r^{-1} (delta_ij + alpha/(alpha+2) w_i w_j)`` with
``c_alpha = (alpha+2) / (8 pi (alpha+1))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import gammaln, ndtri
from scipy.stats import qmc

if TYPE_CHECKING:
    from .grid import GridDomain, GridFunction

SPHERE_SAMPLES = 10_000


class SingularityError(ValueError):
    """A weight was evaluated at its singular point."""


class UnsupportedFundamentalSolution(ValueError):
    pass


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere in ``R^n``: ``n pi^{n/2} / Gamma(n/2 + 1)``."""
    if n < 2:
        raise ValueError("sphere_measure needs n >= 2")
    return n * math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n + 1.0))


def _radius(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(r == 0.0):
        raise SingularityError("fundamental solution evaluated at x = 0")
    return r


def laplace_constant(n: int) -> float:
    return 1.0 / ((n - 2) * sphere_measure(n))


def laplace_fs(n: int, x: np.ndarray) -> np.ndarray | float:
    if n < 3:
        raise ValueError("laplace_fs needs n >= 3")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"expected points in R^{n}")
    r = _radius(x)
    out = laplace_constant(n) * r ** (2.0 - n)
    return float(out) if np.ndim(out) == 0 else out


def lame_constant(alpha: float) -> float:
    """``c_alpha = (alpha + 2) / (8 pi (alpha + 1))``."""
    if not alpha > -1:
        raise ValueError(f"Lamé parameter must exceed -1, got {alpha}")
    return (alpha + 2.0) / (8.0 * math.pi * (alpha + 1.0))


def lame_fs(alpha: float, x: np.ndarray) -> np.ndarray:
    """Kelvin matrix at points ``x`` of shape ``(..., 3)``; returns ``(..., 3, 3)``."""
    c = lame_constant(alpha)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("lame_fs is defined in three dimensions")
    r = _radius(x)
    w = x / r[..., None]
    beta = alpha / (alpha + 2.0)
    mat = np.eye(3) + beta * w[..., :, None] * w[..., None, :]
    return (c / r)[..., None, None] * mat


def polyharmonic_constant(m: int, n: int) -> float:
    if m == 1 and n >= 3:
        return laplace_constant(n)
    if m == 2 and n in (5, 6, 7):
        return 1.0 / (2.0 * (n - 2) * (n - 4) * sphere_measure(n))
    raise UnsupportedFundamentalSolution(
        f"unsupported fundamental solution for (-Delta)^{m} in R^{n}"
    )


def polyharmonic_fs(m: int, n: int, x: np.ndarray) -> np.ndarray | float:
    """Homogeneous fundamental solution of ``(-Delta)^m``.

    Only ``m = 1`` (any ``n >= 3``) and ``m = 2`` with ``n`` in 5, 6, 7 are
    provided; other pairs either carry logarithms or are not needed.
    """
    if m == 1:
        return laplace_fs(n, x)
    c = polyharmonic_constant(m, n)
    x = np.asarray(x, dtype=float)
    r = _radius(x)
    out = c * r ** (2.0 * m - n)
    return float(out) if np.ndim(out) == 0 else out


class WeightKind(str, enum.Enum):
    LAPLACE = "laplace"
    LAME = "lame"
    POLYHARMONIC = "polyharmonic"
    DISCRETE_GREEN = "discrete_green"


@dataclass(frozen=True, eq=False)
class WeightEvaluator:
    """A weight ``Psi`` for weighted quadratic forms.

    Build one with :meth:`laplace`, :meth:`lame`, :meth:`polyharmonic` or
    :meth:`discrete_green`. ``rho`` is the regularization radius: points
    with ``|x| <= rho`` are refused when ``rho > 0``.
    """

    kind: WeightKind
    n: int
    alpha: float = 0.0
    m: int = 1
    green: "GridFunction | None" = None
    green_source: tuple[int, ...] | None = None
    rho: float = 0.0

    def __post_init__(self):
        if self.kind is WeightKind.LAME:
            if self.n != 3:
                raise ValueError("Lamé weight lives in three dimensions")
            lame_constant(self.alpha)
        elif self.kind in (WeightKind.LAPLACE, WeightKind.POLYHARMONIC):
            if not self.n > 2 * self.m:
                raise ValueError(f"need n > 2m, got n={self.n}, m={self.m}")
        elif self.green is None or self.green_source is None:
            raise ValueError("discrete Green weight needs a Green column and its source node")
        if self.rho < 0:
            raise ValueError("regularization radius must be nonnegative")

    @classmethod
    def laplace(cls, n: int, rho: float = 0.0) -> "WeightEvaluator":
        return cls(WeightKind.LAPLACE, n, rho=rho)

    @classmethod
    def lame(cls, alpha: float, rho: float = 0.0) -> "WeightEvaluator":
        return cls(WeightKind.LAME, 3, alpha=alpha, rho=rho)

    @classmethod
    def polyharmonic(cls, m: int, n: int, rho: float = 0.0) -> "WeightEvaluator":
        polyharmonic_constant(m, n)
        return cls(WeightKind.POLYHARMONIC, n, m=m, rho=rho)

    @classmethod
    def discrete_green(cls, green: "GridFunction", source: tuple[int, ...]) -> "WeightEvaluator":
        if green.components != 1:
            raise ValueError("discrete Green weights are scalar")
        return cls(WeightKind.DISCRETE_GREEN, green.domain.dim, green=green, green_source=tuple(source))

    @property
    def is_matrix(self) -> bool:
        return self.kind is WeightKind.LAME

    @property
    def homogeneity(self) -> int:
        """Degree ``2m - n`` of homogeneity (closed-form kinds)."""
        if self.kind is WeightKind.DISCRETE_GREEN:
            raise UnsupportedFundamentalSolution("discrete Green weights are not homogeneous")
        return 2 * self.m - self.n

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind is WeightKind.DISCRETE_GREEN:
            raise UnsupportedFundamentalSolution("discrete Green weights are evaluated on the grid only")
        x = np.asarray(x, dtype=float)
        if self.rho > 0 and np.any(np.sqrt(np.sum(x * x, axis=-1)) <= self.rho):
            raise SingularityError("weight evaluated inside its regularization radius")
        if self.kind is WeightKind.LAPLACE:
            return laplace_fs(self.n, x)
        if self.kind is WeightKind.POLYHARMONIC:
            return polyharmonic_fs(self.m, self.n, x)
        return lame_fs(self.alpha, x)

    def frobenius(self, x: np.ndarray) -> np.ndarray:
        val = np.asarray(self(x))
        if self.is_matrix:
            return np.sqrt(np.sum(val * val, axis=(-2, -1)))
        return np.abs(val)

    def on_grid(self, domain: "GridDomain", x0: tuple[int, ...], skip: np.ndarray) -> np.ndarray:
        """Weight ``Psi(x0 - y)`` at every node ``y``; zero where ``skip`` is set.

        Returns shape ``extents`` for scalar weights and ``extents + (3, 3)``
        for the Lamé matrix.
        """
        if self.kind is WeightKind.DISCRETE_GREEN:
            if self.green.domain is not domain or self.green_source != tuple(x0):
                raise ValueError("discrete Green weight does not match domain or source node")
            out = np.array(self.green.values[..., 0])
            out[skip] = 0.0
            return out
        diff = domain.node_position(x0) - domain.coordinates()
        keep = ~skip
        shape = domain.extents + ((3, 3) if self.is_matrix else ())
        out = np.zeros(shape)
        out[keep] = self(diff[keep])
        return out


def sphere_points(n: int, count: int = SPHERE_SAMPLES) -> np.ndarray:
    """Deterministic quasi-uniform points on ``S^{n-1}``.

    Uses the Fibonacci lattice on ``S^2`` and an unscrambled Halton sequence
    pushed through the Gaussian quantile function otherwise.
    """
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        s = np.sqrt(1.0 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    pts = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    g = ndtri(pts)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def weight_sup_on_sphere(w: WeightEvaluator, count: int = SPHERE_SAMPLES) -> float:
    """``max |Psi(omega)|`` (Frobenius) over a deterministic sample of the unit sphere."""
    if w.kind is WeightKind.DISCRETE_GREEN:
        raise UnsupportedFundamentalSolution("sphere supremum needs a homogeneous weight")
    pts = sphere_points(w.n, count)
    plain = WeightEvaluator(w.kind, w.n, alpha=w.alpha, m=w.m)
    return float(np.max(plain.frobenius(pts)))
