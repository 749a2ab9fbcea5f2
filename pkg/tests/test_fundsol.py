import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eplab.fundsol import (
    SingularityError,
    UnsupportedFundamentalSolution,
    WeightEvaluator,
    lame_constant,
    lame_fs,
    laplace_fs,
    polyharmonic_constant,
    polyharmonic_fs,
    sphere_measure,
    sphere_points,
    weight_sup_on_sphere,
)

from oracles import kelvin_matrix, sphere_area


def test_sphere_measure_values():
    assert sphere_measure(3) == pytest.approx(4 * math.pi, rel=1e-14)
    assert sphere_measure(4) == pytest.approx(2 * math.pi**2, rel=1e-14)
    assert sphere_measure(2) == pytest.approx(2 * math.pi, rel=1e-14)
    for n in range(2, 8):
        assert sphere_measure(n) == pytest.approx(sphere_area(n), rel=1e-13)
    with pytest.raises(ValueError):
        sphere_measure(1)


def test_laplace_values():
    assert laplace_fs(3, np.array([1.0, 0, 0])) == pytest.approx(1 / (4 * math.pi))
    assert laplace_fs(3, np.array([0, 2.0, 0])) == pytest.approx(1 / (8 * math.pi))
    assert laplace_fs(4, np.array([1.0, 0, 0, 0])) == pytest.approx(1 / (4 * math.pi**2))


def test_singular_point():
    with pytest.raises(SingularityError):
        laplace_fs(3, np.zeros(3))
    with pytest.raises(SingularityError):
        lame_fs(0.5, np.zeros((2, 3)))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 7), t=st.floats(0.01, 100),
       x=st.lists(st.floats(-3, 3), min_size=7, max_size=7).filter(lambda v: np.linalg.norm(v[:3]) > 1e-3))
def test_laplace_homogeneity(n, t, x):
    x = np.array(x[:n])
    if np.linalg.norm(x) < 1e-3:
        x[0] = 1.0
    assert laplace_fs(n, t * x) == pytest.approx(t ** (2 - n) * laplace_fs(n, x), rel=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5, 3.0])
def test_kelvin_matrix_matches_oracle(alpha):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 3))
    np.testing.assert_allclose(lame_fs(alpha, X), [kelvin_matrix(alpha, x) for x in X], rtol=1e-13)


def test_kelvin_examples():
    e1 = np.array([1.0, 0, 0])
    np.testing.assert_allclose(lame_fs(0.0, e1), np.eye(3) / (4 * math.pi), rtol=1e-14)
    # alpha = 1: c = 3/(16 pi), beta = 1/3
    np.testing.assert_allclose(lame_fs(1.0, e1), 3 / (16 * math.pi) * np.diag([4 / 3, 1, 1]), rtol=1e-14)
    assert lame_constant(1.0) == pytest.approx(3 / (16 * math.pi))
    with pytest.raises(ValueError):
        lame_constant(-1.0)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(-0.99, 50), x=st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_kelvin_symmetric_positive(alpha, x):
    x = np.array(x)
    if np.linalg.norm(x) < 1e-3:
        x = np.array([0.3, -0.2, 1.0])
    K = lame_fs(alpha, x)
    np.testing.assert_allclose(K, K.T, rtol=0, atol=1e-15 * np.abs(K).max())
    assert np.linalg.eigvalsh(K).min() > 0
    np.testing.assert_allclose(lame_fs(alpha, 2 * x), 0.5 * K, rtol=1e-12)


def test_polyharmonic_values():
    e1 = np.zeros(5)
    e1[0] = 1.0
    assert polyharmonic_fs(2, 5, e1) == pytest.approx(1 / (16 * math.pi**2), rel=1e-13)
    assert polyharmonic_fs(1, 5, e1) == pytest.approx(laplace_fs(5, e1))
    x = np.array([0.3, -0.1, 0.7, 0.2, 0.5, -0.4])
    assert polyharmonic_fs(2, 6, 3 * x) == pytest.approx(3 ** (4 - 6) * polyharmonic_fs(2, 6, x), rel=1e-13)


@pytest.mark.parametrize("m,n", [(2, 4), (2, 8), (3, 7)])
def test_polyharmonic_unsupported(m, n):
    with pytest.raises(UnsupportedFundamentalSolution):
        polyharmonic_constant(m, n)


def _second_differences(f, x, h, n):
    """Sum of centred second differences of ``f`` at ``x``."""
    total = -2 * n * f(x)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        total = total + f(x + e) + f(x - e)
    return total / h**2


@pytest.mark.parametrize("n", [3, 4, 6])
def test_laplace_is_harmonic(n):
    x = np.full(n, 0.4)
    errs = [abs(_second_differences(lambda y: laplace_fs(n, y), x, h, n)) for h in (0.02, 0.01)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] < 1e-3


def test_biharmonic_annihilated():
    x = np.array([0.5, 0.3, -0.2, 0.4, 0.1])

    def lap(y, h):
        return _second_differences(lambda z: polyharmonic_fs(2, 5, z), y, h, 5)

    errs = [abs(_second_differences(lambda y: lap(y, h), x, h, 5)) for h in (0.04, 0.02)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("alpha", [0.5, 2.0])
def test_kelvin_annihilated(alpha):
    x = np.array([0.5, -0.3, 0.4])

    def residual(h):
        lap = _second_differences(lambda y: lame_fs(alpha, y), x, h, 3)
        # grad div of each column: d_i d_k K_kj
        gd = np.zeros((3, 3))
        for i in range(3):
            for k in range(3):
                ei = np.eye(3)[i] * h
                ek = np.eye(3)[k] * h
                d2 = (lame_fs(alpha, x + ei + ek) - lame_fs(alpha, x + ei - ek)
                      - lame_fs(alpha, x - ei + ek) + lame_fs(alpha, x - ei - ek)) / (4 * h * h)
                gd[i] += d2[k]
        return np.abs(-lap - alpha * gd).max()

    errs = [residual(0.02), residual(0.01)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


class TestWeightEvaluator:
    def test_kinds(self):
        assert WeightEvaluator.lame(0.5).is_matrix
        assert not WeightEvaluator.laplace(3).is_matrix
        assert WeightEvaluator.laplace(3).homogeneity == -1
        assert WeightEvaluator.polyharmonic(2, 5).homogeneity == -1
        assert WeightEvaluator.polyharmonic(2, 6).homogeneity == -2

    def test_regularization_radius(self):
        w = WeightEvaluator.laplace(3, rho=0.1)
        with pytest.raises(SingularityError):
            w(np.array([0.05, 0, 0]))
        assert w(np.array([0.2, 0, 0])) == pytest.approx(1 / (0.8 * math.pi))

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            WeightEvaluator.laplace(2)
        with pytest.raises(ValueError):
            WeightEvaluator.lame(-2.0)
        with pytest.raises(UnsupportedFundamentalSolution):
            WeightEvaluator.polyharmonic(2, 4)

    def test_sup_on_sphere(self):
        assert weight_sup_on_sphere(WeightEvaluator.laplace(3)) == pytest.approx(1 / (4 * math.pi), rel=1e-12)
        assert weight_sup_on_sphere(WeightEvaluator.lame(0.0)) == pytest.approx(math.sqrt(3) / (4 * math.pi), rel=1e-12)
        c = 3 / (16 * math.pi)
        # Frobenius norm of c (I + w w^T / 3) is direction independent
        expected = c * math.sqrt((4 / 3) ** 2 + 2)
        assert weight_sup_on_sphere(WeightEvaluator.lame(1.0)) == pytest.approx(expected, rel=1e-12)
        assert weight_sup_on_sphere(WeightEvaluator.polyharmonic(2, 5)) == pytest.approx(1 / (16 * math.pi**2), rel=1e-12)

    @pytest.mark.parametrize("n", [3, 4, 5, 7])
    def test_sphere_points_unit(self, n):
        pts = sphere_points(n, 500)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, rtol=1e-14)
        assert np.abs(pts.mean(axis=0)).max() < 0.1
        np.testing.assert_array_equal(pts, sphere_points(n, 500))
