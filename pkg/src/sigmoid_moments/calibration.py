"""Refit the fixed-form coefficients against gridded oracle data.

The expected-sigmoid scale ``a`` is fitted by bounded Brent search; the four
log-sigmoid coefficients by a multi-start Nelder-Mead simplex with a, c, d
log-parameterised to stay positive. Both minimise the unweighted sum of
squared residuals over the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .montecarlo import (
    DEFAULT_MU_AXIS,
    DEFAULT_SIGMA_AXIS,
    ErrorGrid,
    MCConfig,
    oracle_grid,
)
from .sigmoid import (
    DEFAULT_LOG_SIGMOID_COEFFS,
    Gaussian1D,
    LogSigmoidCoeffs,
    SigmoidCoeff,
    fixed_form_expected_log_sigmoid,
    fixed_form_expected_sigmoid,
    log_sigmoid,
    sigmoid,
)

SIGMOID_BOUNDS = (1e-3, 2.0)
MAX_ITER = 2000
SIMPLEX_TOL = 1e-8

#: Multi-start set for the log-sigmoid fit, (a, b, c, d). The published
#: constants come first so the fit can never end worse than them.
LOG_SIGMOID_STARTS: tuple[tuple[float, float, float, float], ...] = (
    DEFAULT_LOG_SIGMOID_COEFFS.as_tuple(),
    (0.3, -0.5, 1.0, 1.0),
    (0.1, -0.1, 0.5, 0.5),
    (0.5, -1.0, 0.7, 1.2),
    (0.2, 0.0, 1.0, 0.8),
    (0.368, -0.3, 0.9, 1.0),
)


@dataclass(frozen=True, eq=False)
class OracleData:
    """Oracle values on a (mu, sigma) mesh, indexed [i_mu, j_sigma]."""

    mu_axis: np.ndarray
    sigma_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu_axis, dtype=float)
        sig = np.asarray(self.sigma_axis, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (mu.size, sig.size):
            raise ValueError(f"values have shape {vals.shape}, expected {(mu.size, sig.size)}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("oracle values must be finite")
        object.__setattr__(self, "mu_axis", mu)
        object.__setattr__(self, "sigma_axis", sig)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_error_grid(cls, grid: ErrorGrid) -> OracleData:
        return cls(grid.mu_axis, grid.sigma_axis, grid.oracle)

    def gaussian(self) -> Gaussian1D:
        mu, var = np.meshgrid(self.mu_axis, self.sigma_axis, indexing="ij")
        return Gaussian1D(mu, var)


@dataclass(frozen=True)
class FitResult:
    coeffs: SigmoidCoeff | LogSigmoidCoeffs
    objective_value: float
    n_iterations: int
    converged: bool

    def to_dict(self) -> dict:
        if isinstance(self.coeffs, SigmoidCoeff):
            coeffs = {"a": self.coeffs.a}
        else:
            coeffs = dict(zip("abcd", self.coeffs.as_tuple()))
        return {"coeffs": coeffs, "objective_value": self.objective_value,
                "n_iterations": self.n_iterations, "converged": self.converged}


def mc_oracle_data(target: str, cfg: MCConfig, mu_axis: Sequence[float] = DEFAULT_MU_AXIS,
                   sigma_axis: Sequence[float] = DEFAULT_SIGMA_AXIS, *, workers: int = 1) -> OracleData:
    """Monte-Carlo E[s(x)] (``target="sigmoid"``) or E[log s(x)] (``"log-sigmoid"``) on a mesh."""
    f = {"sigmoid": sigmoid, "log-sigmoid": log_sigmoid}.get(target)
    if f is None:
        raise ValueError(f"unknown target {target!r}")
    values, _ = oracle_grid(f, mu_axis, sigma_axis, cfg, workers=workers)
    return OracleData(mu_axis, sigma_axis, values)


def synthetic_sigmoid_data(coeff: SigmoidCoeff, mu_axis=DEFAULT_MU_AXIS, sigma_axis=DEFAULT_SIGMA_AXIS) -> OracleData:
    """Noise-free data generated by the fixed form itself."""
    shell = OracleData(mu_axis, sigma_axis, np.zeros((len(mu_axis), len(sigma_axis))))
    return OracleData(mu_axis, sigma_axis, fixed_form_expected_sigmoid(shell.gaussian(), coeff))


def synthetic_log_sigmoid_data(coeffs: LogSigmoidCoeffs, mu_axis=DEFAULT_MU_AXIS,
                               sigma_axis=DEFAULT_SIGMA_AXIS) -> OracleData:
    shell = OracleData(mu_axis, sigma_axis, np.zeros((len(mu_axis), len(sigma_axis))))
    return OracleData(mu_axis, sigma_axis, fixed_form_expected_log_sigmoid(shell.gaussian(), coeffs))


def sigmoid_objective(a: float, data: OracleData) -> float:
    resid = fixed_form_expected_sigmoid(data.gaussian(), SigmoidCoeff(a)) - data.values
    return float(np.sum(resid**2))


def log_sigmoid_objective(coeffs: LogSigmoidCoeffs, data: OracleData) -> float:
    resid = fixed_form_expected_log_sigmoid(data.gaussian(), coeffs) - data.values
    return float(np.sum(resid**2))


def fit_sigmoid_coeff(data: OracleData, bounds: tuple[float, float] = SIGMOID_BOUNDS) -> FitResult:
    """Least-squares ``a`` in s(mu / sqrt(1 + a var)) by bounded Brent search."""
    res = optimize.minimize_scalar(
        sigmoid_objective, bounds=bounds, args=(data,), method="bounded",
        options={"xatol": 1e-10, "maxiter": MAX_ITER},
    )
    return FitResult(SigmoidCoeff(float(res.x)), float(res.fun), int(res.nfev), bool(res.success))


def _unpack(theta: np.ndarray) -> LogSigmoidCoeffs:
    la, b, lc, ld = theta
    return LogSigmoidCoeffs(math.exp(la), float(b), math.exp(lc), math.exp(ld))


def _pack(start: Sequence[float]) -> np.ndarray:
    a, b, c, d = start
    return np.array([math.log(a), b, math.log(c), math.log(d)])


def fit_log_sigmoid_coeffs(
    data: OracleData,
    starts: Sequence[Sequence[float]] = LOG_SIGMOID_STARTS,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Least-squares (a, b, c, d) by Nelder-Mead from every start; the best run wins.

    ``converged`` and ``n_iterations`` describe the winning run. Raises
    RuntimeError if no start produced a finite objective.
    """
    if not starts:
        raise ValueError("need at least one start")

    def objective(theta: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            val = log_sigmoid_objective(_unpack(theta), data)
        return val if math.isfinite(val) else math.inf

    runs = []
    for start in starts:
        res = optimize.minimize(
            objective, _pack(start), method="Nelder-Mead",
            options={"xatol": SIMPLEX_TOL, "fatol": SIMPLEX_TOL**2, "maxiter": max_iter,
                     "maxfev": 10 * max_iter},
        )
        if math.isfinite(res.fun):
            runs.append(res)
    if not runs:
        raise RuntimeError("every start diverged")
    # several starts usually reach the same optimum up to rounding; among
    # those prefer a run that actually met the simplex tolerance
    floor = min(r.fun for r in runs)
    tied = [r for r in runs if r.fun <= floor + 1e-9 * max(1.0, abs(floor))]
    best = min(tied, key=lambda r: (not r.success, r.fun))
    return FitResult(_unpack(best.x), float(best.fun), int(best.nit), bool(best.success))
