"""Scalar sigmoid and log-sigmoid maps and their Gaussian expectations.

Every function is vectorised: a :class:`Gaussian1D` may hold scalars or
broadcastable arrays for ``mu`` and ``var``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

#: Variance-matching constant between the logistic and normal densities.
ANALYTIC_A = 3.0 / math.pi**2


@dataclass(frozen=True)
class Gaussian1D:
    """Scalar Gaussian belief N(mu, var)."""

    mu: ArrayLike
    var: ArrayLike

    def __post_init__(self):
        var = np.asarray(self.var, dtype=float)
        if np.any(np.isnan(var)) or np.any(var < 0):
            raise ValueError(f"variance must be non-negative, got {self.var!r}")


@dataclass(frozen=True)
class SigmoidShape:
    """Inflexion point ``center`` and steepness scale ``slope`` of s((x - t) / rho)."""

    center: float = 0.0
    slope: float = 1.0

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError(f"slope must be positive, got {self.slope!r}")


@dataclass(frozen=True)
class SigmoidCoeff:
    """Variance scaling ``a`` of the fixed-form expected sigmoid."""

    a: float = 0.368

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a!r}")

    @classmethod
    def analytic(cls) -> SigmoidCoeff:
        return cls(ANALYTIC_A)


@dataclass(frozen=True)
class LogSigmoidCoeffs:
    """Constants of the fixed-form expected log-sigmoid.

    The approximation is ``log s((mu + b * var**c) / sqrt(1 + a * var**d))``.
    """

    a: float = 0.205
    b: float = -0.319
    c: float = 0.781
    d: float = 0.870

    def __post_init__(self):
        for name in ("a", "c", "d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


FITTED_SIGMOID_COEFF = SigmoidCoeff(0.368)
ANALYTIC_SIGMOID_COEFF = SigmoidCoeff.analytic()
DEFAULT_LOG_SIGMOID_COEFFS = LogSigmoidCoeffs(0.205, -0.319, 0.781, 0.870)


def _unwrap(out: np.ndarray):
    return out[()] if out.ndim == 0 else out


def sigmoid(x: ArrayLike):
    """Logistic function 1 / (1 + exp(-x)), overflow-free for any finite x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _unwrap(out)


def log_sigmoid(x: ArrayLike):
    """log s(x) = -log(1 + exp(-x)), stable in both tails."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    xn = x[~pos]
    out[~pos] = xn - np.log1p(np.exp(xn))
    return _unwrap(out)


def sigmoid_deriv(x: ArrayLike, order: int = 1):
    """First or second derivative of the sigmoid.

    Uses ``1 - s(x) = s(-x)`` so neither order loses precision in the tails.
    Orders above two are refused: the product formula sometimes quoted for
    the n-th derivative is wrong from n = 3 on (it gives 0 at x = 0 where the
    true third derivative is -1/8).
    """
    if order not in (1, 2):
        raise ValueError(f"only derivative orders 1 and 2 are supported, got {order!r}")
    sp = sigmoid(x)
    sm = sigmoid(-np.asarray(x, dtype=float))
    if order == 1:
        return sp * sm
    return sp * sm * (sm - sp)


def taylor_expected_sigmoid(g: Gaussian1D, order: int = 2):
    """E[s(x)] from a Taylor expansion of s around the mean.

    The second-order value is not confined to [0, 1].
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    s = sigmoid(g.mu)
    if order == 1:
        return s
    return s * (1.0 + 0.5 * (1.0 - s) * (1.0 - 2.0 * s) * np.asarray(g.var, dtype=float))


def fixed_form_expected_sigmoid(g: Gaussian1D, coeff: SigmoidCoeff = FITTED_SIGMOID_COEFF):
    """E[s(x)] ~ s(mu / sqrt(1 + a var)).

    With ``coeff = SigmoidCoeff.analytic()`` this is the logistic/normal
    moment-matching result; the default a = 0.368 is the Monte-Carlo fit.
    """
    return sigmoid(np.asarray(g.mu, dtype=float) / np.sqrt(1.0 + coeff.a * np.asarray(g.var, dtype=float)))


def taylor_expected_log_sigmoid(g: Gaussian1D, order: int = 2):
    s = sigmoid(g.mu)
    out = log_sigmoid(g.mu)
    if order == 1:
        return out
    if order != 2:
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    return out - 0.5 * s * (1.0 - s) * np.asarray(g.var, dtype=float)


def _pow0(var: np.ndarray, p: float) -> np.ndarray:
    # var**p with the continuous limit 0 at var == 0 for any p > 0
    return np.where(var > 0, np.power(np.where(var > 0, var, 1.0), p), 0.0)


def fixed_form_expected_log_sigmoid(
    g: Gaussian1D, coeffs: LogSigmoidCoeffs = DEFAULT_LOG_SIGMOID_COEFFS
):
    """E[log s(x)] ~ log s((mu + b var^c) / sqrt(1 + a var^d)); always <= 0."""
    var = np.asarray(g.var, dtype=float)
    mu = np.asarray(g.mu, dtype=float)
    arg = (mu + coeffs.b * _pow0(var, coeffs.c)) / np.sqrt(1.0 + coeffs.a * _pow0(var, coeffs.d))
    return log_sigmoid(arg)


def parametric_sigmoid(x: ArrayLike, shape: SigmoidShape):
    return sigmoid((np.asarray(x, dtype=float) - shape.center) / shape.slope)


def parametric_expected_sigmoid(g: Gaussian1D, shape: SigmoidShape):
    """E[s((x - t) / rho)] ~ s((mu - t) / sqrt(rho^2 + 3 var / pi^2))."""
    mu = np.asarray(g.mu, dtype=float)
    var = np.asarray(g.var, dtype=float)
    return sigmoid((mu - shape.center) / np.sqrt(shape.slope**2 + ANALYTIC_A * var))


def expected_reciprocal_shifted(g: Gaussian1D, shift: float):
    """E[1 / (shift + exp(-x))], using 1 / (c + e^-x) = s(x + log c) / c."""
    if not shift > 0:
        raise ValueError(f"shift must be positive, got {shift!r}")
    shape = SigmoidShape(center=-math.log(shift), slope=1.0)
    return parametric_expected_sigmoid(g, shape) / shift


def expected_sigmoid_derivative(g: Gaussian1D, form: str = "rescaled"):
    """E[s'(x)] under x ~ N(mu, var).

    ``form="rescaled"`` (default) returns s'(mu / k) / k with
    k = sqrt(1 + 3 var / pi^2). It is exact at var = 0, keeps the logistic
    tails, and is the term that makes :func:`sigmoid_variance` consistent.

    ``form="gaussian"`` returns the matched normal density N(0; mu, var + pi^2/3).
    It is closer to Monte Carlo for moderate |mu| and large var but does not
    reduce to s'(mu) at var = 0 and decays too fast in the tails.
    """
    mu = np.asarray(g.mu, dtype=float)
    var = np.asarray(g.var, dtype=float)
    if form == "rescaled":
        k = np.sqrt(1.0 + ANALYTIC_A * var)
        return sigmoid_deriv(mu / k, 1) / k
    if form == "gaussian":
        total = var + math.pi**2 / 3.0
        return np.exp(-0.5 * mu**2 / total) / np.sqrt(2.0 * math.pi * total)
    raise ValueError(f"unknown form {form!r}; expected 'rescaled' or 'gaussian'")


def sigmoid_variance(g: Gaussian1D):
    """Var[s(x)] ~ s~(1 - s~)(1 - 1/k), s~ = s(mu/k), k = sqrt(1 + 3 var / pi^2).

    Bounded in [0, 1/4], zero at var = 0 and non-decreasing in var.
    """
    mu = np.asarray(g.mu, dtype=float)
    var = np.asarray(g.var, dtype=float)
    k = np.sqrt(1.0 + ANALYTIC_A * var)
    m = mu / k
    return sigmoid(m) * sigmoid(-m) * (1.0 - 1.0 / k)
