"""Softmax and log-softmax maps, their derivatives and Gaussian expectations.

Component indices are zero-based.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from .sigmoid import (
    FITTED_SIGMOID_COEFF,
    Gaussian1D,
    SigmoidCoeff,
    fixed_form_expected_sigmoid,
)

_CLAMP_EPS = 1e-15


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def psd_factor(cov: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Return F with F @ F.T == cov.

    Cholesky when it succeeds, otherwise the symmetric square root with
    rounding-level eigenvalues set to zero, so a rank-deficient ``cov``
    gives draws exactly on its range. Raises ValueError if the smallest
    eigenvalue is below ``-tol * trace(cov)``.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(cov)
    if w.min() < -tol * max(np.trace(cov), 0.0):
        raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {w.min():.3g})")
    w = np.where(w > w.size * np.finfo(float).eps * np.abs(w).max(), w, 0.0)
    return (v * np.sqrt(w)) @ v.T


@dataclass(frozen=True, eq=False)
class GaussianVec:
    """K-dimensional Gaussian belief N(mean, cov), K >= 2."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _readonly(self.mean)
        cov = _readonly(self.cov)
        if mean.ndim != 1 or mean.size < 2:
            raise ValueError("mean must be a vector of length >= 2")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        scale = max(np.abs(cov).max(), np.finfo(float).tiny)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise ValueError("cov is not symmetric")
        psd_factor(cov)  # raises if not PSD within tolerance
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class Contrast:
    """Weight vector c; x -> c @ x."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))

    @classmethod
    def pairwise(cls, k: int, j: int, dim: int) -> Contrast:
        """e_k - e_j, i.e. x_k - x_j (the zero vector when k == j)."""
        _check_index(k, dim)
        _check_index(j, dim)
        w = np.zeros(dim)
        w[k] += 1.0
        w[j] -= 1.0
        return cls(w)


@dataclass(frozen=True)
class SimCovSpec:
    """Exchangeable 3x3 covariance sigma * A A^T with A = I + rho (J - I)."""

    sigma: float
    rho: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if not -0.5 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1/2, 1), got {self.rho!r}")

    @property
    def correlation(self) -> float:
        return marginal_correlation(self.rho)


def marginal_correlation(rho: float) -> float:
    """Correlation between entries of x under sigma * A A^T: (2 rho + rho^2) / (1 + 2 rho^2)."""
    return (2.0 * rho + rho**2) / (1.0 + 2.0 * rho**2)


def sim_covariance(spec: SimCovSpec, dim: int = 3) -> np.ndarray:
    a = np.eye(dim) + spec.rho * (np.ones((dim, dim)) - np.eye(dim))
    return spec.sigma * (a @ a.T)


def _check_index(k: int, dim: int) -> None:
    if not 0 <= k < dim:
        raise IndexError(f"component index {k} out of range for dimension {dim}")


def softmax(x: ArrayLike) -> np.ndarray:
    """exp(x_k) / sum_j exp(x_j) along the last axis (max-shifted)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise ValueError("softmax needs at least two components")
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def log_softmax_gradient(x: ArrayLike, k: int) -> np.ndarray:
    """Gradient of log pi_k: e_k - pi(x)."""
    p = softmax(x)
    _check_index(k, p.size)
    g = -p
    g[k] += 1.0
    return g


def log_softmax_hessian(x: ArrayLike) -> np.ndarray:
    """Hessian of log pi_k, the same for every k: pi pi^T - Diag(pi)."""
    p = softmax(x)
    return np.outer(p, p) - np.diag(p)


def softmax_gradient(x: ArrayLike, k: int) -> np.ndarray:
    p = softmax(x)
    _check_index(k, p.size)
    e = -p
    e[k] += 1.0
    return p[k] * e


def softmax_hessian(x: ArrayLike, k: int) -> np.ndarray:
    """pi_k (pi pi^T - Diag(pi) + (e_k - pi)(e_k - pi)^T)."""
    p = softmax(x)
    _check_index(k, p.size)
    e = -p
    e[k] += 1.0
    return p[k] * (np.outer(p, p) - np.diag(p) + np.outer(e, e))


def taylor_expected_log_softmax(g: GaussianVec, k: int) -> float:
    _check_index(k, g.dim)
    lp = log_softmax(g.mean)
    return float(lp[k] + 0.5 * np.trace(log_softmax_hessian(g.mean) @ g.cov))


def taylor_expected_softmax(g: GaussianVec, k: int, order: int = 2) -> float:
    """pi_k(mu), plus 1/2 tr[H_k(mu) cov] at order 2. Not confined to [0, 1]."""
    _check_index(k, g.dim)
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    pk = softmax(g.mean)[k]
    if order == 1:
        return float(pk)
    return float(pk + 0.5 * np.trace(softmax_hessian(g.mean, k) @ g.cov))


def contrast_moments(g: GaussianVec, c: Contrast) -> Gaussian1D:
    """Mean c mu and variance c cov c^T of the scalar c @ x."""
    w = c.weights
    if w.shape != g.mean.shape:
        raise ValueError(f"contrast length {w.size} does not match dimension {g.dim}")
    var = float(w @ g.cov @ w)
    # PSD tolerance on cov can leave a rounding-level negative here
    return Gaussian1D(float(w @ g.mean), max(var, 0.0))


def fixed_form_expected_softmax(
    g: GaussianVec, k: int, coeff: SigmoidCoeff = FITTED_SIGMOID_COEFF
) -> float:
    """E[pi_k(x)] from the fixed-form expected sigmoid of each contrast x_k - x_j.

    Combines them as 1 / (2 - K + sum_j 1/<s(x_k - x_j)>), which is exact in
    the sigmoid sense only for K = 2; there the single contrast value is
    returned unchanged. The K values are not renormalised to sum to one.
    """
    _check_index(k, g.dim)
    terms = [
        fixed_form_expected_sigmoid(contrast_moments(g, Contrast.pairwise(k, j, g.dim)), coeff)
        for j in range(g.dim)
        if j != k
    ]
    if g.dim == 2:
        return float(terms[0])
    with np.errstate(divide="ignore"):
        denom = 2.0 - g.dim + sum(1.0 / t for t in terms)
    return float(np.clip(1.0 / denom, _CLAMP_EPS, 1.0 - _CLAMP_EPS))
