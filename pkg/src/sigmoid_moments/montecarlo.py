"""Seeded Monte-Carlo estimators and (mu, Sigma) error grids.

Every estimate is a pure function of its inputs. Grid cells draw from
independent streams keyed by ``SeedSequence(seed, spawn_key=cell_index)``,
so a grid comes out bit-identical regardless of evaluation order or the
number of worker processes.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .sigmoid import Gaussian1D
from .softmax import GaussianVec, SimCovSpec, psd_factor, sim_covariance

_CHUNK = 1 << 18
REL_ERROR_FLOOR = 1e-12

DEFAULT_MU_AXIS = np.linspace(-10.0, 10.0, 41)
DEFAULT_SIGMA_AXIS = 2.0 ** np.arange(-4, 9)


class EstimationError(RuntimeError):
    """A Monte-Carlo estimate came out NaN."""


@dataclass(frozen=True)
class MCConfig:
    n_samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 1000:
            raise ValueError(f"n_samples must be an integer >= 1000, got {self.n_samples!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")


@dataclass(frozen=True)
class MCEstimate:
    value: float
    std_error: float
    n_samples: int


def make_rng(seed: int, key: Sequence[int] = ()) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def _chunk_sizes(n: int) -> Iterator[int]:
    full, rest = divmod(n, _CHUNK)
    yield from itertools.repeat(_CHUNK, full)
    if rest:
        yield rest


def sample_gaussian_1d(g: Gaussian1D, cfg: MCConfig, key: Sequence[int] = ()) -> Iterator[np.ndarray]:
    """Yield chunks of draws from N(mu, var); the concatenation has cfg.n_samples entries."""
    rng = make_rng(cfg.seed, key)
    mu, sd = float(g.mu), math.sqrt(float(g.var))
    for m in _chunk_sizes(cfg.n_samples):
        yield mu + sd * rng.standard_normal(m)


def sample_gaussian_vec(g: GaussianVec, cfg: MCConfig, key: Sequence[int] = ()) -> Iterator[np.ndarray]:
    """Yield (m, K) chunks of draws from N(mean, cov) via :func:`psd_factor`."""
    rng = make_rng(cfg.seed, key)
    factor = psd_factor(g.cov)
    for m in _chunk_sizes(cfg.n_samples):
        # (K, m) layout keeps the product and the later per-column maps contiguous
        yield (factor @ rng.standard_normal((g.dim, m)) + g.mean[:, None]).T


def _reduce(values: Iterator[np.ndarray]) -> MCEstimate:
    # Chan et al. pairwise update of (count, mean, M2)
    n, mean, m2 = 0, 0.0, 0.0
    for v in values:
        v = np.asarray(v, dtype=float)
        nb = v.size
        mb = float(v.mean())
        m2b = float(((v - mb) ** 2).sum())
        delta = mb - mean
        tot = n + nb
        mean += delta * nb / tot
        m2 += m2b + delta**2 * n * nb / tot
        n = tot
    if math.isnan(mean) or math.isnan(m2):
        raise EstimationError("Monte-Carlo estimate is NaN")
    sd = math.sqrt(m2 / (n - 1))
    return MCEstimate(mean, sd / math.sqrt(n), n)


def mc_expect(f: Callable, g: Gaussian1D, cfg: MCConfig, key: Sequence[int] = ()) -> MCEstimate:
    """Sample mean of f(x), x ~ N(mu, var), with its standard error."""
    return _reduce(f(x) for x in sample_gaussian_1d(g, cfg, key))


def mc_expect_vec(f: Callable, g: GaussianVec, cfg: MCConfig, key: Sequence[int] = ()) -> MCEstimate:
    """Sample mean of f(x) for vector x ~ N(mean, cov); f maps (m, K) -> (m,)."""
    return _reduce(f(x) for x in sample_gaussian_vec(g, cfg, key))


def mc_variance(f: Callable, g: Gaussian1D, cfg: MCConfig, key: Sequence[int] = ()) -> MCEstimate:
    """Unbiased sample variance of f(x).

    Two passes over the same seeded stream: the mean first, then the mean of
    squared deviations. ``std_error`` is that of the variance estimate.
    """
    m = mc_expect(f, g, cfg, key).value
    dev = mc_expect(lambda x: (f(x) - m) ** 2, g, cfg, key)
    n = dev.n_samples
    scale = n / (n - 1)
    return MCEstimate(dev.value * scale, dev.std_error * scale, n)


# ---------------------------------------------------------------------------
# error grids


def relative_error(approx, oracle) -> np.ndarray:
    approx = np.asarray(approx, dtype=float)
    oracle = np.asarray(oracle, dtype=float)
    return np.abs(approx - oracle) / np.maximum(np.abs(oracle), REL_ERROR_FLOOR)


@dataclass(frozen=True, eq=False)
class ErrorGrid:
    """Approximation vs oracle on a (mu, sigma) grid; matrices are indexed [i_mu, j_sigma]."""

    mu_axis: np.ndarray
    sigma_axis: np.ndarray
    approx: np.ndarray
    oracle: np.ndarray
    oracle_stderr: np.ndarray
    rel_error: np.ndarray = field(init=False)

    def __post_init__(self):
        shape = (len(self.mu_axis), len(self.sigma_axis))
        for name in ("approx", "oracle", "oracle_stderr"):
            if np.shape(getattr(self, name)) != shape:
                raise ValueError(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")
        object.__setattr__(self, "rel_error", relative_error(self.approx, self.oracle))

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.approx - self.oracle)

    def with_approx(self, approx: np.ndarray) -> ErrorGrid:
        return ErrorGrid(self.mu_axis, self.sigma_axis, np.asarray(approx, dtype=float),
                         self.oracle, self.oracle_stderr)

    def rows(self) -> Iterator[tuple[float, ...]]:
        for i, mu in enumerate(self.mu_axis):
            for j, s in enumerate(self.sigma_axis):
                yield (float(mu), float(s), float(self.approx[i, j]), float(self.oracle[i, j]),
                       float(self.oracle_stderr[i, j]), float(self.rel_error[i, j]))


class GridCellError(EstimationError):
    """An oracle failure tagged with the grid coordinates of its cell."""

    def __init__(self, cell: tuple, message: str):
        super().__init__(cell, message)
        self.cell = cell
        self.message = message

    def __str__(self):
        return f"cell {self.cell}: {self.message}"


def _cell_1d(task) -> tuple[float, float]:
    f, stat, mu, var, cfg, key = task
    try:
        est = (mc_variance if stat == "var" else mc_expect)(f, Gaussian1D(mu, var), cfg, key)
    except EstimationError as exc:
        raise GridCellError((mu, var), str(exc)) from None
    return est.value, est.std_error


def _run(fn, tasks: list, workers: int) -> list:
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return [fn(t) for t in tasks]


def oracle_grid(
    oracle_f: Callable,
    mu_axis: Sequence[float],
    sigma_axis: Sequence[float],
    cfg: MCConfig,
    *,
    stat: str = "mean",
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo E[f(x)] (or Var[f(x)] with ``stat="var"``) on every cell.

    Returns (values, std_errors) as |mu_axis| x |sigma_axis| arrays. With
    ``workers > 1`` ``oracle_f`` must be picklable (a module-level function).
    """
    mu_axis = np.asarray(mu_axis, dtype=float)
    sigma_axis = np.asarray(sigma_axis, dtype=float)
    if mu_axis.size == 0 or sigma_axis.size == 0:
        raise ValueError("grid axes must be non-empty")
    if np.any(sigma_axis <= 0):
        raise ValueError("variance axis must be positive")
    if stat not in ("mean", "var"):
        raise ValueError(f"stat must be 'mean' or 'var', got {stat!r}")
    tasks = [(oracle_f, stat, float(mu), float(s), cfg, (i, j))
             for i, mu in enumerate(mu_axis) for j, s in enumerate(sigma_axis)]
    out = _run(_cell_1d, tasks, workers)
    vals = np.array(out, dtype=float).reshape(mu_axis.size, sigma_axis.size, 2)
    return vals[..., 0], vals[..., 1]


def build_error_grid(
    approx: Callable[[Gaussian1D], np.ndarray],
    oracle_f: Callable,
    mu_axis: Sequence[float] = DEFAULT_MU_AXIS,
    sigma_axis: Sequence[float] = DEFAULT_SIGMA_AXIS,
    cfg: MCConfig = MCConfig(),
    *,
    stat: str = "mean",
    workers: int = 1,
) -> ErrorGrid:
    """Evaluate ``approx`` on the mesh and compare with the Monte-Carlo oracle of ``oracle_f``."""
    mu_axis = np.asarray(mu_axis, dtype=float)
    sigma_axis = np.asarray(sigma_axis, dtype=float)
    oracle, stderr = oracle_grid(oracle_f, mu_axis, sigma_axis, cfg, stat=stat, workers=workers)
    mu_m, s_m = np.meshgrid(mu_axis, sigma_axis, indexing="ij")
    values = np.broadcast_to(np.asarray(approx(Gaussian1D(mu_m, s_m)), dtype=float), mu_m.shape)
    return ErrorGrid(mu_axis, sigma_axis, np.array(values), oracle, stderr)


# ---------------------------------------------------------------------------
# three-dimensional softmax grid


@dataclass(frozen=True, eq=False)
class SoftmaxGridAxes:
    """rho x sigma x mu_2 x mu_3 design for x ~ N((0, mu_2, mu_3), sigma A A^T)."""

    rho: np.ndarray
    sigma: np.ndarray
    mu2: np.ndarray
    mu3: np.ndarray

    @classmethod
    def coarse(cls) -> SoftmaxGridAxes:
        return cls(np.linspace(-0.45, 0.95, 9), 100.0 * 2.0 ** -np.arange(8.0, -1.0, -1.0),
                   np.linspace(-5, 5, 11), np.linspace(-5, 5, 11))

    @classmethod
    def fine(cls) -> SoftmaxGridAxes:
        return cls(np.linspace(-0.45, 0.95, 17), 100.0 * 2.0 ** -np.arange(8.0, -0.25, -0.5),
                   np.linspace(-5, 5, 21), np.linspace(-5, 5, 21))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (len(self.rho), len(self.sigma), len(self.mu2), len(self.mu3))

    def cells(self) -> Iterator[tuple[tuple[int, ...], tuple[float, ...]]]:
        for idx in itertools.product(*(range(n) for n in self.shape)):
            yield idx, (float(self.rho[idx[0]]), float(self.sigma[idx[1]]),
                        float(self.mu2[idx[2]]), float(self.mu3[idx[3]]))

    def gaussian(self, rho: float, sigma: float, mu2: float, mu3: float) -> GaussianVec:
        return GaussianVec(np.array([0.0, mu2, mu3]), sim_covariance(SimCovSpec(sigma, rho)))


def contrast_space(g: GaussianVec, k: int) -> GaussianVec | Gaussian1D:
    """Distribution of y_j = x_j - x_k over j != k.

    pi_k(x) = 1 / (1 + sum_j exp(y_j)) depends on x only through y, so
    sampling y is an exact change of variables for the oracle of pi_k.
    """
    c = np.delete(np.eye(g.dim), k, axis=0)
    c[:, k] -= 1.0
    mean = c @ g.mean
    cov = c @ g.cov @ c.T
    cov = 0.5 * (cov + cov.T)
    if mean.size == 1:
        return Gaussian1D(float(mean[0]), max(float(cov[0, 0]), 0.0))
    return GaussianVec(mean, cov)


def softmax_from_contrasts(y: np.ndarray) -> np.ndarray:
    """pi_k given rows of contrasts y_j = x_j - x_k."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(y).sum(axis=1))


def _cell_softmax(task) -> tuple[float, float]:
    g, cfg, key = task
    try:
        est = mc_expect_vec(softmax_from_contrasts, contrast_space(g, 0), cfg, key)
    except EstimationError as exc:
        raise GridCellError(tuple(key), str(exc)) from None
    return est.value, est.std_error


@dataclass(frozen=True, eq=False)
class SoftmaxErrorGrid:
    axes: SoftmaxGridAxes
    approx: np.ndarray
    oracle: np.ndarray
    oracle_stderr: np.ndarray
    rel_error: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rel_error", relative_error(self.approx, self.oracle))

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.approx - self.oracle)

    def with_approx(self, approx: np.ndarray) -> SoftmaxErrorGrid:
        return SoftmaxErrorGrid(self.axes, np.asarray(approx, dtype=float), self.oracle, self.oracle_stderr)

    def rows(self) -> Iterator[tuple[float, ...]]:
        for idx, point in self.axes.cells():
            yield (*point, float(self.approx[idx]), float(self.oracle[idx]),
                   float(self.oracle_stderr[idx]), float(self.rel_error[idx]))


def softmax_oracle_grid(axes: SoftmaxGridAxes, cfg: MCConfig, *, workers: int = 1):
    """Monte-Carlo E[pi_1(x)] on every cell of the softmax design."""
    tasks = [(axes.gaussian(*point), cfg, idx) for idx, point in axes.cells()]
    out = np.array(_run(_cell_softmax, tasks, workers), dtype=float).reshape(*axes.shape, 2)
    return out[..., 0], out[..., 1]


def evaluate_softmax_approx(approx: Callable[[GaussianVec], float], axes: SoftmaxGridAxes) -> np.ndarray:
    out = np.empty(axes.shape)
    for idx, point in axes.cells():
        out[idx] = approx(axes.gaussian(*point))
    return out


def build_softmax_error_grid(
    approx: Callable[[GaussianVec], float],
    axes: SoftmaxGridAxes | None = None,
    cfg: MCConfig = MCConfig(),
    *,
    workers: int = 1,
) -> SoftmaxErrorGrid:
    axes = axes or SoftmaxGridAxes.coarse()
    oracle, stderr = softmax_oracle_grid(axes, cfg, workers=workers)
    return SoftmaxErrorGrid(axes, evaluate_softmax_approx(approx, axes), oracle, stderr)
