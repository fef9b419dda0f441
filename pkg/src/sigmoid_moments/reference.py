"""Exact or quadrature-based references the approximations are checked against."""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .applications import BernoulliBatch, SkewNormalParams, skew_normal_log_pdf_unnorm
from .sigmoid import Gaussian1D


def folded_normal_mean(g: Gaussian1D) -> float:
    """E|x| for x ~ N(mu, var)."""
    mu, var = float(g.mu), float(g.var)
    if var == 0:
        return abs(mu)
    sd = math.sqrt(var)
    return sd * math.sqrt(2.0 / math.pi) * math.exp(-0.5 * mu * mu / var) + mu * math.erf(mu / (sd * math.sqrt(2.0)))


def poisson_binomial_pmf(b: BernoulliBatch) -> np.ndarray:
    """P(sum b_i = n) for n = 0..N, by direct convolution."""
    pmf = np.array([1.0])
    for lam in b.lambdas:
        pmf = np.convolve(pmf, [1.0 - lam, lam])
    return pmf


def exact_expected_log_sum_bernoulli(b: BernoulliBatch) -> float:
    """E[log(1 + sum b_i)] by enumerating the count distribution."""
    pmf = poisson_binomial_pmf(b)
    return float(pmf @ np.log1p(np.arange(pmf.size)))


def skew_normal_cdf_quadrature(p: SkewNormalParams, z: float, width: float = 12.0) -> float:
    """P(X <= z) by adaptive quadrature of the unnormalised density over mu +/- width*sqrt(sigma)."""
    sd = math.sqrt(p.sigma)
    lo, hi = p.mu - width * sd, p.mu + width * sd
    # rescale by the density's peak so quad works on O(1) values
    grid = np.linspace(lo, hi, 2001)
    shift = float(np.max(skew_normal_log_pdf_unnorm(p, grid)))

    def f(x: float) -> float:
        return math.exp(float(skew_normal_log_pdf_unnorm(p, x)) - shift)

    points = [x for x in (p.t, p.mu) if lo < x < hi]
    total, _ = integrate.quad(f, lo, hi, points=points or None, epsrel=1e-9, limit=200)
    zc = min(max(float(z), lo), hi)
    if zc <= lo:
        return 0.0
    inner = [x for x in points if x < zc]
    part, _ = integrate.quad(f, lo, zc, points=inner or None, epsrel=1e-9, limit=200)
    return min(max(part / total, 0.0), 1.0)
