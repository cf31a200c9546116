import numpy as np
import pytest

from nestedkrig.aggregated_process import AggregatedProcessModel, k_agg_matrix
from nestedkrig.datasets import regular_grid, synthetic_values
from nestedkrig.diagnostics import (
    bounds_report,
    covariance_gap_identities,
    delta_matrix,
    error_report,
    exact_mse,
    max_error_bound_check,
    nearest_neighbor_mse,
    norm_k_bound_applies,
    smallest_eigenvalue,
)
from nestedkrig.errors import ArgumentError
from nestedkrig.gp_core import fit_full, kriging_weights, predict_full
from nestedkrig.kernels import kernel_vector, make_kernel
from nestedkrig.nested_aggregator import nested_predict
from nestedkrig.submodels import Partition, fit_submodels, make_partition
from nestedkrig.variance_aggregators import VARIANCE_METHODS, aggregate_variance_based

from .conftest import random_design


class TestExactMSE:
    """Test the closed-form MSE of linear predictors."""

    def test_zero_weights_give_prior(self, five):
        assert exact_mse(np.zeros(5), 0.4, five.spec, five.X) == five.spec.variance

    def test_full_weights_give_kriging_variance(self, five):
        """Test exact_mse of the Kriging weights is v_full(x)."""
        model = fit_full(five.spec, five.X, five.y)
        for x in (0.0, 0.24, 0.66):
            _, var = predict_full(model, x)
            assert exact_mse(kriging_weights(model, x), x, five.spec, five.X) == pytest.approx(var, abs=1e-10)

    def test_nested_weights_give_nested_variance(self, five, five_bank):
        """Test exact_mse of the nested effective weights is v_A(x)."""
        for x in (0.05, 0.42, 0.85):
            pred = nested_predict(five_bank, x)
            assert exact_mse(pred.effective_weights, x, five.spec, five.X) == pytest.approx(
                pred.variance, abs=1e-10
            )

    def test_ordering_full_nested_variance_based(self, five, five_bank, grid101):
        """Test MSE_full <= MSE_nested <= MSE of every variance-based rule."""
        model = fit_full(five.spec, five.X, five.y)
        for x in grid101[::4]:
            _, v_full = predict_full(model, x)
            v_nested = exact_mse(nested_predict(five_bank, x).effective_weights, x, five.spec, five.X)
            assert v_full <= v_nested + 1e-10
            for method in VARIANCE_METHODS:
                w = aggregate_variance_based(five_bank, method, x).effective_weights
                assert v_nested <= exact_mse(w, x, five.spec, five.X) + 1e-10

    def test_weight_count_mismatch(self, five):
        with pytest.raises(ArgumentError):
            exact_mse(np.zeros(4), 0.4, five.spec, five.X)


class TestNearestNeighborMSE:
    """Test the single-neighbor predictor MSE."""

    def test_at_design_point(self, five):
        assert nearest_neighbor_mse(five.spec, five.X, 0.3) == 0.0

    def test_formula(self, five):
        """Test 1 - rho^2 for the nearest design point."""
        rho = float(kernel_vector(five.spec, [[0.5]], 0.45)[0])
        assert nearest_neighbor_mse(five.spec, five.X, 0.45) == pytest.approx(1.0 - rho**2, abs=1e-14)

    def test_not_better_than_full(self, five, grid101):
        model = fit_full(five.spec, five.X, five.y)
        for x in grid101[::5]:
            assert predict_full(model, x)[1] <= nearest_neighbor_mse(five.spec, five.X, x) + 1e-12


class TestDelta:
    """Test Delta(x) and the gap identities it carries."""

    def test_positive_semidefinite(self, five_bank):
        """Test Delta(x) is positive semi-definite."""
        for x in (0.2, 0.6, 0.85):
            assert np.linalg.eigvalsh(delta_matrix(five_bank, x)).min() >= -1e-8

    def test_quadratic_forms(self, five, five_bank):
        """Test M_A - M_full = -k Delta y and v_A - v_full = k Delta k at 0.85."""
        x = 0.85
        delta = delta_matrix(five_bank, x)
        kx = kernel_vector(five.spec, five.X, x)
        pred = nested_predict(five_bank, x)
        mean_full, var_full = predict_full(fit_full(five.spec, five.X, five.y), x)
        assert pred.mean - mean_full == pytest.approx(-kx @ delta @ five.y, abs=1e-8)
        assert pred.variance - var_full == pytest.approx(kx @ delta @ kx, abs=1e-8)
        assert pred.variance - var_full > 0.0

    def test_vanishes_for_singletons(self):
        spec = make_kernel("matern32", lengthscale=0.2)
        X = regular_grid(0.0, 1.0, 20)
        y = synthetic_values("sin2pi_plus_x", X, spec)
        bank = fit_submodels(spec, X, y, Partition.singletons(20))
        for x in (0.013, 0.5, 0.77):
            assert np.max(np.abs(np.linalg.eigvalsh(delta_matrix(bank, x)))) < 1e-8


class TestCovarianceDifferenceIdentities:
    """Test both sides of the errors-as-covariance-differences identities."""

    def test_five_point_grid(self, five_bank, grid101):
        for x in grid101[::5]:
            lhs_mean, rhs_mean, lhs_var, rhs_var = covariance_gap_identities(five_bank, x)
            assert lhs_mean == pytest.approx(rhs_mean, abs=1e-8)
            assert lhs_var == pytest.approx(rhs_var, abs=1e-8)

    def test_design_points(self, five, five_bank):
        """Test both sides of the identities vanish on the design."""
        for xi in five.X:
            assert np.allclose(covariance_gap_identities(five_bank, xi), 0.0, atol=1e-8)

    def test_random_designs(self, rng):
        """Test 100 unconstrained random designs, 10 points each, in one and two dimensions."""
        strategies = ("contiguous", "random", "nearest")
        checked_bounds = 0
        for trial in range(100):
            dim = 1 + trial % 2
            if dim == 1:
                spec = make_kernel("matern32", lengthscale=0.1)
                X = rng.random((int(rng.integers(4, 21)), 1))
            else:
                spec = make_kernel("matern32", lengthscale=0.15, dim=2)
                X = rng.random((int(rng.integers(4, 51)), 2))
            n = X.shape[0]
            p = int(rng.integers(2, min(8, n) + 1))
            partition = make_partition(n, p, strategies[trial % 3], seed=trial, X=X)
            bank = fit_submodels(spec, X, rng.standard_normal(n), partition)
            lam_min = smallest_eigenvalue(bank)
            bound_applies = norm_k_bound_applies(bank, lam_min)
            model = AggregatedProcessModel(bank=bank)
            for x in rng.random((10, dim)):
                lhs_mean, rhs_mean, lhs_var, rhs_var = covariance_gap_identities(bank, x)
                assert lhs_mean == pytest.approx(rhs_mean, abs=1e-8)
                assert lhs_var == pytest.approx(rhs_var, abs=1e-8)
                if bound_applies:
                    u = kernel_vector(spec, X, x) - k_agg_matrix(model, X, x[None, :])[:, 0]
                    assert rhs_mean <= float(u @ u) / lam_min * (1.0 + 1e-6) + 1e-12
                    checked_bounds += 1
        assert checked_bounds > 0

    def test_norm_bound(self, five, five_bank, five_model):
        """Test ||u||_K^2 <= ||u||^2 / lambda_min for u = k(X,x) - k_A(X,x)."""
        lam_min = smallest_eigenvalue(five_bank)
        for x in (0.2, 0.6, 0.85):
            _, rhs_mean, _, _ = covariance_gap_identities(five_bank, x)
            u = kernel_vector(five.spec, five.X, x) - k_agg_matrix(five_model, five.X, [[x]])[:, 0]
            assert rhs_mean <= float(u @ u) / lam_min + 1e-12

    def test_bound_skipped_for_coincident_rows(self):
        """Test a repeated design row makes lambda_min too small for the norm bound."""
        spec = make_kernel("matern32", lengthscale=0.2)
        X = np.array([[0.1], [0.4], [0.4], [0.9]])
        bank = fit_submodels(spec, X, np.zeros(4), Partition(groups=((0, 1), (2, 3)), n=4))
        assert not norm_k_bound_applies(bank, smallest_eigenvalue(bank))

    def test_bound_applies_on_separated_design(self, five_bank):
        assert norm_k_bound_applies(five_bank, smallest_eigenvalue(five_bank))

    def test_error_report(self, five_bank):
        report = error_report(five_bank, 0.85)
        assert report.mean_identity_residual < 1e-8
        assert report.var_identity_residual < 1e-8
        assert -1e-8 <= report.var_gap <= report.sandwich_hi + 1e-8
        assert report.mean_gap_rms >= 0.0
        assert report.lambda_min > 0.0


class TestBounds:
    """Test the max-error bounds and the variance sandwich."""

    def test_grid(self, five, five_bank, grid101):
        """Test every bound holds on the five-point grid."""
        for x in grid101[::2]:
            check = max_error_bound_check(five_bank, x, five.y)
            assert check.holds, x

    def test_design_points_have_no_gap(self, five, five_bank):
        for xi in five.X:
            check = max_error_bound_check(five_bank, xi, five.y)
            assert abs(check.mean_gap) < 1e-8
            assert abs(check.var_gap) < 1e-8

    def test_far_point(self):
        """Test a point beyond the reach of the design keeps the gaps tiny."""
        spec = make_kernel("matern52", lengthscale=0.05)
        X = np.array([[0.0], [0.1], [0.2], [0.3]])
        y = np.array([1.0, -1.0, 0.5, 2.0])
        bank = fit_submodels(spec, X, y, make_partition(4, 2))
        check = max_error_bound_check(bank, 1.0, y)
        assert check.kx_norm < 1e-6
        assert check.holds
        assert abs(check.mean_gap) <= check.op_norm * 1e-6 * check.y_norm + 1e-10

    def test_observation_count(self, five_bank):
        with pytest.raises(ArgumentError):
            max_error_bound_check(five_bank, 0.4, [1.0, 2.0])


class TestBoundsReport:
    """Test the per-point error table."""

    def test_columns_and_values(self, five_bank, grid101):
        """Test the bounds report layout and var_gap within its upper bound."""
        frame = bounds_report(five_bank, grid101)
        assert list(frame.columns) == ["x", "mean_gap", "mean_gap_bound", "var_gap", "var_gap_upper"]
        assert len(frame) == 101
        assert np.all(frame["var_gap"] >= -1e-8)
        assert np.all(frame["var_gap"] <= frame["var_gap_upper"] + 1e-8)
        assert np.all(frame["mean_gap_bound"] >= 0.0)

    def test_design_rows_have_zero_gap(self, five, five_bank):
        frame = bounds_report(five_bank, five.X)
        np.testing.assert_allclose(frame["mean_gap"], 0.0, atol=1e-8)
        np.testing.assert_allclose(frame["var_gap"], 0.0, atol=1e-8)

    def test_two_dimensional_columns(self, rng):
        """Test coordinate columns x1, x2 in two dimensions."""
        spec = make_kernel("matern32", lengthscale=0.3, dim=2)
        X = random_design(rng, 12, 2, 0.1)
        bank = fit_submodels(spec, X, rng.standard_normal(12), make_partition(12, 3))
        frame = bounds_report(bank, regular_grid(0.0, 1.0, 3, dim=2))
        assert list(frame.columns[:2]) == ["x1", "x2"]
        assert len(frame) == 9
