"""Applications built on the expected sigmoid / log-sigmoid approximations.

* CDF of the sigmoid-times-Gaussian ("skew-normal") density,
* expected log(1 + sum of independent Bernoulli variables),
* expected absolute value of a Gaussian variable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import ndtr, owens_t

from .sigmoid import (
    ANALYTIC_A,
    DEFAULT_LOG_SIGMOID_COEFFS,
    Gaussian1D,
    LogSigmoidCoeffs,
    fixed_form_expected_log_sigmoid,
    log_sigmoid,
    sigmoid,
)

_LOGISTIC_SCALE = math.pi / math.sqrt(3.0)
#: s(u) ~ sum_i w_i Phi(u / c_i), as (w_i, c_i). Minimax fit of log s on
#: u in [-16, 0] (max log error 1.7e-3); symmetric by construction.
LOGISTIC_NORMAL_MIXTURE = (
    (0.3422726489720242, 1.1866285425288292),
    (0.45865006226068483, 1.779361853040683),
    (0.17090221917180165, 2.4751069939432764),
    (0.027047655539589086, 3.269440414011305),
    (0.0011274140559001463, 4.264601942595824),
)
_VARIANCE_MATCHED = ((1.0, _LOGISTIC_SCALE),)
#: Default ratio sqrt(var) / rho used by :func:`expected_abs`.
ABS_RHO_RATIO = 5.95


@dataclass(frozen=True)
class SkewNormalParams:
    """Density proportional to s((x - t) / rho) N(x | mu, sigma); ``sigma`` is a variance."""

    t: float
    rho: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho!r}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")

    @property
    def threshold_var(self) -> float:
        """Variance of the normal matched to the logistic threshold: pi^2 rho^2 / 3."""
        return math.pi**2 * self.rho**2 / 3.0


@dataclass(frozen=True, eq=False)
class BernoulliBatch:
    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float).ravel()
        if lam.size < 1:
            raise ValueError("need at least one Bernoulli variable")
        if np.any(np.isnan(lam)) or np.any((lam < 0) | (lam > 1)):
            raise ValueError("every lambda must lie in [0, 1]")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)


def bivariate_normal_cdf(h: float, k: float, r: float) -> float:
    """P(U <= h, V <= k) for standard normals with correlation |r| < 1 (Owen's T form)."""
    h, k, r = float(h), float(k), float(r)
    if not -1.0 < r < 1.0:
        raise ValueError(f"correlation must lie in (-1, 1), got {r!r}")
    if math.isinf(h) or math.isinf(k):
        if h == -math.inf or k == -math.inf:
            return 0.0
        return float(ndtr(k) if h == math.inf else ndtr(h))
    if h == 0.0 and k == 0.0:
        return 0.25 + math.asin(r) / (2.0 * math.pi)
    q = math.sqrt((1.0 - r) * (1.0 + r))
    ah = (k - r * h) / (h * q) if h != 0.0 else math.copysign(math.inf, k - r * h)
    ak = (h - r * k) / (k * q) if k != 0.0 else math.copysign(math.inf, h - r * k)
    beta = 0.0 if (h * k > 0 or (h * k == 0 and h + k >= 0)) else 0.5
    out = 0.5 * ndtr(h) + 0.5 * ndtr(k) - owens_t(h, ah) - owens_t(k, ak) - beta
    return float(min(max(out, 0.0), 1.0))


def skew_normal_log_pdf_unnorm(p: SkewNormalParams, x: ArrayLike):
    """log[s((x - t) / rho) N(x | mu, sigma)]."""
    x = np.asarray(x, dtype=float)
    log_gauss = -0.5 * np.log(2.0 * math.pi * p.sigma) - 0.5 * (x - p.mu) ** 2 / p.sigma
    return log_sigmoid((x - p.t) / p.rho) + log_gauss


def skew_normal_normalizer(p: SkewNormalParams) -> float:
    """Normalising constant K ~ s((mu - t) / sqrt(rho^2 + 3 sigma / pi^2))."""
    return float(sigmoid((p.mu - p.t) / math.sqrt(p.rho**2 + ANALYTIC_A * p.sigma)))


def _cdf_normal_thresholds(p: SkewNormalParams, z: float, components) -> float:
    # s((x - t)/rho) is read as P(L <= x) for a threshold L, itself a mixture
    # of N(t, (rho * scale)^2). Per component, P(X <= z, L <= X) is a
    # bivariate normal probability over (X, X - L).
    h = (z - p.mu) / math.sqrt(p.sigma)
    num = den = 0.0
    for weight, scale in components:
        sd = math.sqrt(p.sigma + (p.rho * scale) ** 2)
        k = (p.t - p.mu) / sd
        num += weight * bivariate_normal_cdf(h, -k, -math.sqrt(p.sigma) / sd)
        den += weight * float(ndtr(-k))
    return num / den


def _cdf_by_parts(p: SkewNormalParams, z: float, omega_sign: int) -> float:
    # Integration by parts with a normal density in the remainder term.
    # Kept for comparison only: it overshoots 1 for most parameters.
    v1 = p.threshold_var
    nu = 1.0 / (3.0 / (math.pi**2 * p.rho**2) + 1.0 / p.sigma)
    eta = nu * (3.0 * p.t / (math.pi**2 * p.rho**2) + p.mu / p.sigma)
    omega = (1.0 / (2.0 * math.pi) / math.sqrt(v1 + p.sigma)
             * math.exp(-0.5 * (p.t + omega_sign * p.mu) ** 2 / (v1 + p.sigma)))
    head = sigmoid((z - p.t) / p.rho) * sigmoid(_LOGISTIC_SCALE * (z - p.mu) / math.sqrt(p.sigma))
    tail = omega * sigmoid(_LOGISTIC_SCALE * (z - eta) / math.sqrt(nu))
    return float((head - tail) / skew_normal_normalizer(p))


def skew_normal_cdf(p: SkewNormalParams, z: float, method: str = "mixture") -> float:
    """P(X <= z) for X with density proportional to s((x - t) / rho) N(x | mu, sigma).

    ``method="mixture"`` (default) writes the sigmoid as a five-term scale
    mixture of normal CDFs, which turns the CDF into a ratio of closed-form
    bivariate normal probabilities. It is exactly normalised, non-decreasing
    in z, tends to the N(mu, sigma) CDF as t -> -inf, and keeps the
    exponential tail of the sigmoid, so it stays accurate when t sits far
    out in a tail of the Gaussian.

    ``method="matched"`` uses a single normal CDF with the logistic variance
    pi^2 rho^2 / 3. Same structure, but it loses accuracy once t is more than
    about two standard deviations above mu.

    ``method="by-parts-plus"`` / ``"by-parts-minus"`` evaluate the two-sigmoid
    closed form obtained by integrating by parts with a density (rather than
    a CDF) in the remainder, using (t + mu)^2 or (t - mu)^2 in its weight.
    Neither reproduces quadrature; they exist to document that finding.

    The result is clipped to [0, 1].
    """
    z = float(z)
    if method == "mixture":
        out = _cdf_normal_thresholds(p, z, LOGISTIC_NORMAL_MIXTURE)
    elif method == "matched":
        out = _cdf_normal_thresholds(p, z, _VARIANCE_MATCHED)
    elif method == "by-parts-plus":
        out = _cdf_by_parts(p, z, +1)
    elif method == "by-parts-minus":
        out = _cdf_by_parts(p, z, -1)
    else:
        raise ValueError(f"unknown method {method!r}")
    return min(max(out, 0.0), 1.0)


def bernoulli_logsum_matched_gaussian(b: BernoulliBatch) -> Gaussian1D:
    """Gaussian (mu, var) whose log-normal exp(x) matches the mean and variance of sum(b_i)."""
    m = float(b.lambdas.sum())
    if m <= 0:
        raise ValueError("sum of lambdas must be positive")
    v = float((b.lambdas * (1.0 - b.lambdas)).sum())
    # log(v + m^2) - 2 log m, written to stay >= 0 exactly
    var = math.log1p(v / m**2)
    return Gaussian1D(math.log(m) - 0.5 * var, var)


def expected_log_sum_bernoulli(b: BernoulliBatch, coeffs: LogSigmoidCoeffs = DEFAULT_LOG_SIGMOID_COEFFS) -> float:
    """E[log(1 + sum b_i)] ~ -E[log s(-x)] with x the log-normal-matched Gaussian."""
    g = bernoulli_logsum_matched_gaussian(b)
    return float(-fixed_form_expected_log_sigmoid(Gaussian1D(-g.mu, g.var), coeffs))


def soft_abs(x: ArrayLike, rho: float):
    """Smooth |x|: x - 2 rho log s(x / rho). Lies in [|x|, |x| + 2 rho log 2]."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    x = np.asarray(x, dtype=float)
    return x - 2.0 * rho * log_sigmoid(x / rho)


def expected_abs(
    g: Gaussian1D, rho: float | None = None, coeffs: LogSigmoidCoeffs = DEFAULT_LOG_SIGMOID_COEFFS
):
    """E|x| ~ E[soft_abs(x, rho)] with E[log s(x / rho)] from the fixed form.

    soft_abs is even in x, so the expectation is taken at |mu|; the fixed form
    is only accurate for non-negative means. ``rho=None`` picks
    rho = sqrt(var) / ABS_RHO_RATIO, which keeps var / rho^2 inside the range the
    fixed form was fitted on (rho = 1e-3 when var == 0). A fixed tiny rho
    pushes var / rho^2 far outside that range and loses accuracy.
    """
    mu = np.abs(np.asarray(g.mu, dtype=float))
    var = np.asarray(g.var, dtype=float)
    if rho is None:
        rho = np.where(var > 0, np.sqrt(var) / ABS_RHO_RATIO, 1e-3)
    elif not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    rho = np.asarray(rho, dtype=float)
    scaled = Gaussian1D(mu / rho, var / rho**2)
    out = mu - 2.0 * rho * fixed_form_expected_log_sigmoid(scaled, coeffs)
    return out[()] if np.ndim(out) == 0 else out
