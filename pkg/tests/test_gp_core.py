import numpy as np
import pytest

from nestedkrig.errors import (
    ArgumentError,
    EmptyPointSetError,
    NegativeVarianceError,
    SingularMatrixError,
)
from nestedkrig.gp_core import (
    clamp_variance,
    factorize_design,
    fit_full,
    kriging_weights,
    predict_full,
    predict_full_batch,
    predict_full_cov,
)
from nestedkrig.kernels import kernel_matrix, kernel_vector, make_kernel
from nestedkrig.linalg import FactorizationFailed, jittered_cholesky

from .conftest import random_design


def dense_reference(spec, X, y, x):
    """Mean and variance from a dense solve, without any factorization reuse."""
    K = kernel_matrix(spec, X, X)
    kx = kernel_vector(spec, X, x)
    return float(kx @ np.linalg.solve(K, y)), spec.variance - float(kx @ np.linalg.solve(K, kx))


class TestFitFull:
    """Test fitting and prediction of exact Kriging."""

    def test_matches_dense_solve(self, rng):
        """Test mean and variance against np.linalg.solve on 100 random designs."""
        for dim, max_n, min_sep, ls in ((1, 15, 0.05, 0.2), (2, 50, 0.08, 0.3)):
            spec = make_kernel("matern32", lengthscale=ls, dim=dim)
            for _ in range(50):
                n = int(rng.integers(5, max_n + 1))
                X = random_design(rng, n, dim, min_sep)
                y = rng.standard_normal(n)
                model = fit_full(spec, X, y)
                for x in rng.random((10, dim)):
                    mean, var = predict_full(model, x)
                    ref_mean, ref_var = dense_reference(spec, X, y, x)
                    assert mean == pytest.approx(ref_mean, abs=1e-8)
                    assert var == pytest.approx(max(ref_var, 0.0), abs=1e-8)

    def test_interpolates_observations(self, five):
        """Test M_full(x_i) = y_i and v_full(x_i) = 0."""
        model = fit_full(five.spec, five.X, five.y)
        for xi, yi in zip(five.X, five.y):
            mean, var = predict_full(model, xi)
            assert mean == pytest.approx(yi, abs=1e-8)
            assert var == pytest.approx(0.0, abs=1e-8)

    def test_variance_bounded_by_prior(self, five, grid101):
        """Test 0 <= v_full(x) <= k(x,x) on a grid."""
        model = fit_full(five.spec, five.X, five.y)
        _, variances = predict_full_batch(model, grid101)
        assert np.all(variances >= 0.0)
        assert np.all(variances <= five.spec.variance + 1e-12)

    def test_batch_agrees_with_pointwise(self, five, grid101):
        model = fit_full(five.spec, five.X, five.y)
        means, variances = predict_full_batch(model, grid101)
        for x, m, v in zip(grid101[::10], means[::10], variances[::10]):
            mean, var = predict_full(model, x)
            assert m == pytest.approx(mean, abs=1e-12)
            assert v == pytest.approx(var, abs=1e-12)

    def test_weights_reproduce_mean(self, five):
        model = fit_full(five.spec, five.X, five.y)
        mean, _ = predict_full(model, 0.37)
        assert float(kriging_weights(model, 0.37) @ five.y) == pytest.approx(mean, abs=1e-12)

    def test_single_point_design(self):
        """Test the closed form with one observation."""
        spec = make_kernel("squared_exponential", lengthscale=0.2)
        model = fit_full(spec, [[0.5]], [2.0])
        mean, var = predict_full(model, 0.3)
        rho = np.exp(-0.5)
        assert mean == pytest.approx(2.0 * rho, rel=1e-12)
        assert var == pytest.approx(1.0 - rho**2, rel=1e-12)

    def test_bad_inputs(self):
        spec = make_kernel("matern32")
        with pytest.raises(EmptyPointSetError):
            fit_full(spec, np.empty((0, 1)), [])
        with pytest.raises(ArgumentError):
            fit_full(spec, [[0.1], [0.2]], [1.0])


class TestConditionalCovariance:
    """Test c_full(x, x')."""

    def test_matches_schur_complement(self, five):
        model = fit_full(five.spec, five.X, five.y)
        K = kernel_matrix(five.spec, five.X, five.X)
        a, b = 0.25, 0.62
        ka, kb = kernel_vector(five.spec, five.X, a), kernel_vector(five.spec, five.X, b)
        expected = float(kernel_matrix(five.spec, [[a]], [[b]])[0, 0]) - ka @ np.linalg.solve(K, kb)
        assert predict_full_cov(model, a, b) == pytest.approx(expected, abs=1e-10)

    def test_symmetric(self, five):
        """Test c_full(x, x') = c_full(x', x)."""
        model = fit_full(five.spec, five.X, five.y)
        assert predict_full_cov(model, 0.2, 0.85) == pytest.approx(
            predict_full_cov(model, 0.85, 0.2), abs=1e-14
        )

    def test_diagonal_is_variance(self, five):
        model = fit_full(five.spec, five.X, five.y)
        _, var = predict_full(model, 0.44)
        assert predict_full_cov(model, 0.44, 0.44) == pytest.approx(var, abs=1e-12)

    def test_vanishes_at_design_points(self, five):
        """Test c_full(x_i, x) = 0 for design points x_i."""
        model = fit_full(five.spec, five.X, five.y)
        assert abs(predict_full_cov(model, 0.3, 0.6)) < 1e-8


class TestJitter:
    """Test the factorization fallback policy."""

    def test_no_jitter_on_well_conditioned(self, five):
        model = fit_full(five.spec, five.X, five.y)
        assert model.jitter_used == 0.0

    def test_duplicate_rows_need_jitter(self):
        """Test a repeated design point is absorbed by jitter."""
        spec = make_kernel("matern32", lengthscale=0.2)
        X = [[0.1], [0.3], [0.3], [0.7]]
        model = fit_full(spec, X, [0.0, 1.0, 1.0, 0.5])
        assert 0.0 < model.jitter_used <= 1e-4
        mean, _ = predict_full(model, 0.3)
        assert mean == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize(
        "X",
        [
            [[0.1], [0.3], [0.5], [0.7], [0.9]],
            [[0.1], [0.3], [0.3], [0.7]],
        ],
    )
    def test_factor_reproduces_jittered_kernel(self, X):
        """Test chol chol^T = k(X,X) + jitter I within 1e-8."""
        spec = make_kernel("matern32", lengthscale=0.2)
        model = fit_full(spec, X, np.zeros(len(X)))
        expected = kernel_matrix(spec, X, X) + model.jitter_used * np.eye(len(X))
        np.testing.assert_allclose(model.factor.reconstruct(), expected, atol=1e-8)

    def test_jitter_schedule_exhausted(self):
        """Test a negative definite matrix fails at every jitter level."""
        with pytest.raises(FactorizationFailed):
            jittered_cholesky(-np.eye(3))

    def test_singular_error_names_closest_pair(self, monkeypatch):
        import nestedkrig.gp_core as gp_core

        def always_fail(*args, **kwargs):
            raise FactorizationFailed(1e-4)

        monkeypatch.setattr(gp_core, "jittered_cholesky", always_fail)
        spec = make_kernel("matern32")
        with pytest.raises(SingularMatrixError) as info:
            factorize_design(spec, np.array([[0.0], [0.5], [0.52], [1.0]]))
        assert info.value.pair == (1, 2)
        assert "closest rows 1 and 2" in str(info.value)


def test_clamp_variance():
    """Test roundoff negatives clamp to zero and real negatives raise."""
    assert clamp_variance(-1e-14, 1.0) == 0.0
    assert clamp_variance(0.25, 1.0) == 0.25
    with pytest.raises(NegativeVarianceError):
        clamp_variance(-1e-3, 1.0)
