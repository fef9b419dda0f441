"""Closed-form Gaussian expectations of sigmoid, log-sigmoid and softmax maps."""
from __future__ import annotations

__version__ = "0.1.0"

from .applications import (
    BernoulliBatch,
    SkewNormalParams,
    bernoulli_logsum_matched_gaussian,
    expected_abs,
    expected_log_sum_bernoulli,
    skew_normal_cdf,
    skew_normal_log_pdf_unnorm,
    soft_abs,
)
from .calibration import FitResult, fit_log_sigmoid_coeffs, fit_sigmoid_coeff
from .montecarlo import ErrorGrid, MCConfig, MCEstimate, build_error_grid, mc_expect, mc_expect_vec, mc_variance
from .sigmoid import (
    ANALYTIC_SIGMOID_COEFF,
    DEFAULT_LOG_SIGMOID_COEFFS,
    FITTED_SIGMOID_COEFF,
    Gaussian1D,
    LogSigmoidCoeffs,
    SigmoidCoeff,
    SigmoidShape,
    expected_reciprocal_shifted,
    expected_sigmoid_derivative,
    fixed_form_expected_log_sigmoid,
    fixed_form_expected_sigmoid,
    log_sigmoid,
    parametric_expected_sigmoid,
    parametric_sigmoid,
    sigmoid,
    sigmoid_deriv,
    sigmoid_variance,
    taylor_expected_log_sigmoid,
    taylor_expected_sigmoid,
)
from .softmax import (
    Contrast,
    GaussianVec,
    SimCovSpec,
    contrast_moments,
    fixed_form_expected_softmax,
    log_softmax,
    log_softmax_gradient,
    log_softmax_hessian,
    sim_covariance,
    softmax,
    softmax_gradient,
    softmax_hessian,
    taylor_expected_log_softmax,
    taylor_expected_softmax,
)
