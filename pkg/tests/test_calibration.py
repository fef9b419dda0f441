from __future__ import annotations

import math

import numpy as np
import pytest

from sigmoid_moments.calibration import (
    LOG_SIGMOID_STARTS,
    FitResult,
    OracleData,
    fit_log_sigmoid_coeffs,
    fit_sigmoid_coeff,
    log_sigmoid_objective,
    mc_oracle_data,
    sigmoid_objective,
    synthetic_log_sigmoid_data,
    synthetic_sigmoid_data,
)
from sigmoid_moments.montecarlo import MCConfig, build_error_grid
from sigmoid_moments.sigmoid import (
    ANALYTIC_A,
    DEFAULT_LOG_SIGMOID_COEFFS,
    LogSigmoidCoeffs,
    SigmoidCoeff,
    fixed_form_expected_sigmoid,
    sigmoid,
)

SMALL_MU = np.linspace(-10, 10, 11)
SMALL_SIGMA = 2.0 ** np.arange(-4, 9, 2)


@pytest.fixture(scope="module")
def mc_log_data():
    return mc_oracle_data("log-sigmoid", MCConfig(20_000, 77), SMALL_MU, SMALL_SIGMA)


class TestOracleData:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            OracleData([0.0, 1.0], [1.0], np.zeros((1, 2)))

    def test_finite(self):
        with pytest.raises(ValueError):
            OracleData([0.0], [1.0], [[np.nan]])

    def test_from_error_grid(self):
        grid = build_error_grid(fixed_form_expected_sigmoid, sigmoid, [0.0, 1.0], [1.0], MCConfig(1000, 0))
        data = OracleData.from_error_grid(grid)
        np.testing.assert_array_equal(data.values, grid.oracle)

    def test_unknown_target(self):
        with pytest.raises(ValueError):
            mc_oracle_data("softmax", MCConfig(1000, 0))


class TestSigmoidFit:
    def test_recovers_synthetic(self):
        fit = fit_sigmoid_coeff(synthetic_sigmoid_data(SigmoidCoeff(0.3)))
        assert fit.converged
        assert abs(fit.coeffs.a - 0.3) < 1e-4
        assert fit.objective_value < 1e-12

    def test_recovers_analytic(self):
        fit = fit_sigmoid_coeff(synthetic_sigmoid_data(SigmoidCoeff.analytic()))
        assert abs(fit.coeffs.a - ANALYTIC_A) < 0.01

    def test_objective_is_sum_of_squares(self):
        data = synthetic_sigmoid_data(SigmoidCoeff(0.3), SMALL_MU, SMALL_SIGMA)
        resid = fixed_form_expected_sigmoid(data.gaussian(), SigmoidCoeff(0.5)) - data.values
        np.testing.assert_allclose(sigmoid_objective(0.5, data), np.sum(resid**2), rtol=1e-14)

    def test_monte_carlo_data(self):
        data = mc_oracle_data("sigmoid", MCConfig(20_000, 78), SMALL_MU, SMALL_SIGMA)
        fit = fit_sigmoid_coeff(data)
        assert fit.converged
        assert 0.32 <= fit.coeffs.a <= 0.42

    def test_to_dict(self):
        d = FitResult(SigmoidCoeff(0.3), 0.0, 5, True).to_dict()
        assert d == {"coeffs": {"a": 0.3}, "objective_value": 0.0, "n_iterations": 5, "converged": True}


class TestLogSigmoidFit:
    def test_starts(self):
        assert len(LOG_SIGMOID_STARTS) >= 5
        assert LOG_SIGMOID_STARTS[0] == DEFAULT_LOG_SIGMOID_COEFFS.as_tuple()

    def test_recovers_synthetic(self):
        fit = fit_log_sigmoid_coeffs(synthetic_log_sigmoid_data(DEFAULT_LOG_SIGMOID_COEFFS))
        assert fit.converged
        np.testing.assert_allclose(fit.coeffs.as_tuple(), DEFAULT_LOG_SIGMOID_COEFFS.as_tuple(), atol=1e-3)

    def test_recovers_other_synthetic(self):
        true = LogSigmoidCoeffs(0.3, -0.2, 0.9, 0.7)
        fit = fit_log_sigmoid_coeffs(synthetic_log_sigmoid_data(true, SMALL_MU, SMALL_SIGMA))
        np.testing.assert_allclose(fit.coeffs.as_tuple(), true.as_tuple(), atol=1e-3)

    def test_never_worse_than_published(self, mc_log_data):
        fit = fit_log_sigmoid_coeffs(mc_log_data)
        assert fit.objective_value <= log_sigmoid_objective(DEFAULT_LOG_SIGMOID_COEFFS, mc_log_data) + 1e-9
        np.testing.assert_allclose(fit.objective_value, log_sigmoid_objective(fit.coeffs, mc_log_data), rtol=1e-12)

    def test_published_start_converges(self):
        data = synthetic_log_sigmoid_data(LogSigmoidCoeffs(0.3, -0.2, 0.9, 0.7))
        fit = fit_log_sigmoid_coeffs(data, starts=[DEFAULT_LOG_SIGMOID_COEFFS.as_tuple()])
        assert fit.converged
        assert fit.n_iterations < 2000

    def test_deterministic(self, mc_log_data):
        a = fit_log_sigmoid_coeffs(mc_log_data)
        b = fit_log_sigmoid_coeffs(mc_log_data)
        assert a == b

    def test_positivity(self, mc_log_data):
        fit = fit_log_sigmoid_coeffs(mc_log_data)
        a, _, c, d = fit.coeffs.as_tuple()
        assert min(a, c, d) > 0

    def test_iteration_budget_reported(self, mc_log_data):
        fit = fit_log_sigmoid_coeffs(mc_log_data, starts=[(0.1, -0.1, 0.5, 0.5)], max_iter=10)
        assert not fit.converged
        assert fit.n_iterations == 10

    def test_needs_a_start(self, mc_log_data):
        with pytest.raises(ValueError):
            fit_log_sigmoid_coeffs(mc_log_data, starts=[])

    def test_mc_data_is_log_domain(self, mc_log_data):
        assert np.all(mc_log_data.values <= 0)
        # deep positive tail: log s(x) ~ -exp(-x), a log-normal mean
        assert math.isclose(mc_log_data.values[-1, 0], -math.exp(-10.0 + 2.0**-5), rel_tol=0.01)
