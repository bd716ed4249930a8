"""Pathwise mollified DSLT and its Monte Carlo moments.

On a uniform grid t_j = j dt the functional

    (-1)^{|k|} int_{0<r<s<t} f_eps^{(k)}(B_s - B_r - y) dr ds

is approximated by a trapezoidal sum over grid pairs j < l (the diagonal
j = l is left out). The sign (-1)^{|k|} cancels the (-1)^{k_i} factors of the
Hermite form of the derivative, so the summand is

    f_eps(z) prod_i eps^{-k_i/2} He_{k_i}(z_i / sqrt(eps)),   z = B_l - B_j - y.

The compiled kernel returns per-column sums over j, from which the value at
every grid horizon t_N follows by a cumulative sum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .config import ModelConfig
from .fbm import PathBatch, sample_paths

__all__ = [
    "DsltSample",
    "McEstimate",
    "GridMismatchError",
    "MAX_ORDER",
    "dslt_pathwise",
    "dslt_columns",
    "horizon_values",
    "dslt_batch",
    "mc_moment",
    "write_values_csv",
    "batch_values",
]

# prefer OpenMP; TBB builds older than numba expects only produce a warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

MAX_ORDER = 6
# exp(-80) ~ 1.8e-35: terms beyond this are below double-precision relevance
_EXP_CUTOFF = 80.0


class GridMismatchError(ValueError):
    """Path grid does not cover the configured horizon."""


@numba.njit(cache=True, inline="always")
def _hermite(m, x):
    if m == 0:
        return 1.0
    prev = 1.0
    cur = x
    for j in range(1, m):
        prev, cur = cur, x * cur - j * prev
    return cur


@numba.njit(cache=True, parallel=True)
def _columns_kernel(X, ys, eps, k, out):
    n_paths, n1, d = X.shape
    n_y = ys.shape[0]
    n_e = eps.shape[0]
    z = np.empty((n_paths, d))
    for p in numba.prange(n_paths):
        for l in range(1, n1):
            for j in range(l):
                w = 0.5 if j == 0 else 1.0
                for iy in range(n_y):
                    r2 = 0.0
                    for i in range(d):
                        zi = X[p, l, i] - X[p, j, i] - ys[iy, i]
                        z[p, i] = zi
                        r2 += zi * zi
                    for ie in range(n_e):
                        e = eps[ie]
                        a = r2 / (2.0 * e)
                        if a > _EXP_CUTOFF:
                            continue
                        val = np.exp(-a)
                        root = np.sqrt(e)
                        for i in range(d):
                            if k[i] > 0:
                                val *= _hermite(k[i], z[p, i] / root)
                        out[p, iy, ie, l] += w * val


def _normalization(eps: np.ndarray, k: Sequence[int]) -> np.ndarray:
    d = len(k)
    return (2.0 * np.pi * eps) ** (-d / 2) * eps ** (-sum(k) / 2)


def dslt_columns(paths: np.ndarray, k: Sequence[int], eps, ys) -> np.ndarray:
    """Weighted column sums S[p, y, e, l] = sum_{j<l} c_j g_e(X_l - X_j - y).

    ``paths`` has shape (P, n + 1, d); ``c_0 = 1/2`` and ``c_j = 1`` otherwise.
    Normalization constants are already applied.
    """
    X = np.ascontiguousarray(paths, dtype=float)
    if X.ndim != 3:
        raise ValueError("paths must have shape (n_paths, n_steps + 1, d)")
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if np.any(eps <= 0):
        raise ValueError("epsilon must be positive")
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    k_arr = np.asarray(k, dtype=np.int64)
    if ys.shape[1] != X.shape[2] or k_arr.size != X.shape[2]:
        raise ValueError("dimension mismatch between paths, k and y")
    out = np.zeros((X.shape[0], ys.shape[0], eps.size, X.shape[1]))
    _columns_kernel(X, ys, eps, k_arr, out)
    return out * _normalization(eps, k)[None, None, :, None]


def horizon_values(columns: np.ndarray, dt: float, horizons: Sequence[int] | None = None) -> np.ndarray:
    """Trapezoidal DSLT at grid horizons N from column sums (last axis).

    value(N) = dt^2 (sum_{0<l<N} S_l + S_N / 2). ``horizons`` defaults to the
    full grid; the result gains a trailing axis over horizons.
    """
    n = columns.shape[-1] - 1
    idx = np.array([n] if horizons is None else list(horizons), dtype=int)
    if np.any(idx < 1) or np.any(idx > n):
        raise ValueError("horizon index out of range")
    csum = np.cumsum(columns, axis=-1)
    # sum_{l<N} S_l + S_N/2 = csum[N] - S_N/2 (S_0 = 0)
    vals = csum[..., idx] - 0.5 * columns[..., idx]
    return dt * dt * vals


@dataclass
class DsltSample:
    """One realization of the mollified DSLT."""

    value: float
    cfg: ModelConfig
    y: tuple[float, ...]
    n_steps: int


def _check_grid(n_steps: int, dt: float | None, cfg: ModelConfig) -> float:
    grid_dt = cfg.t / n_steps
    if dt is not None and not math.isclose(dt * n_steps, cfg.t, rel_tol=1e-12):
        raise GridMismatchError(f"path covers [0, {dt * n_steps}] but cfg.t = {cfg.t}")
    return grid_dt


def _as_y(y, d: int) -> np.ndarray:
    y = np.zeros(d) if y is None else np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (d,):
        raise ValueError(f"y must have {d} coordinates")
    return y


def dslt_pathwise(path, cfg: ModelConfig, y=None, dt: float | None = None) -> DsltSample:
    """Mollified DSLT of one path given on the uniform grid of [0, cfg.t].

    ``path`` has shape (n_steps + 1, d) or (n_steps + 1,) when d = 1. If
    ``dt`` is given it must match ``cfg.t / n_steps``.
    """
    x = np.asarray(path, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != cfg.d:
        raise ValueError(f"path has {x.shape[1]} coordinates, cfg.d = {cfg.d}")
    n = x.shape[0] - 1
    if n < 1:
        raise ValueError("path needs at least two grid points")
    grid_dt = _check_grid(n, dt, cfg)
    yv = _as_y(y, cfg.d)
    cols = dslt_columns(x[None], cfg.k, cfg.epsilon, yv)
    value = float(horizon_values(cols, grid_dt)[0, 0, 0, 0])
    return DsltSample(value, cfg, tuple(float(v) for v in yv), n)


def dslt_batch(
    cfg: ModelConfig,
    n_paths: int,
    n_steps: int,
    seed: int,
    y=None,
    stride: int = 1,
    first_path: int = 0,
    chunk: int = 256,
    negate: bool = False,
) -> np.ndarray:
    """DSLT values of freshly sampled paths, shape (n_paths,).

    ``stride > 1`` evaluates on every ``stride``-th grid node of the same
    paths, which gives a coarser discretization of identical realizations.
    """
    yv = _as_y(y, cfg.d)
    if n_steps % stride:
        raise ValueError("stride must divide n_steps")
    out = np.empty(n_paths)
    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        batch = sample_paths(cfg, n_steps, stop - start, seed, first_path=first_path + start)
        x = batch.values[:, ::stride, :]
        if negate:
            x = -x
        cols = dslt_columns(x, cfg.k, cfg.epsilon, yv)
        out[start:stop] = horizon_values(cols, batch.dt * stride)[:, 0, 0, 0]
    return out


@dataclass
class McEstimate:
    """Monte Carlo mean with provenance; ``n_samples`` counts independent samples."""

    mean: float
    variance: float
    std_error: float
    n_samples: int
    seed: int
    discretization_tol: float = 0.0
    order: int = 1
    antithetic: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _moment_samples(cfg, y, order, n_paths, n_steps, seed, antithetic, stride):
    base = dslt_batch(cfg, n_paths, n_steps, seed, y, stride=stride)
    if not antithetic:
        return base**order
    if not np.any(_as_y(y, cfg.d)):
        mirror = base if cfg.k_abs % 2 == 0 else -base
    else:
        mirror = dslt_batch(cfg, n_paths, n_steps, seed, y, stride=stride, negate=True)
    return 0.5 * (base**order + mirror**order)


def mc_moment(
    cfg: ModelConfig,
    y,
    order: int,
    n_paths: int,
    n_steps: int,
    seed: int,
    antithetic: bool = True,
    discretization: bool = True,
) -> McEstimate:
    """Monte Carlo estimate of E[a^n] with one DSLT evaluation per path.

    With ``antithetic`` each of the ``n_paths`` independent paths is paired
    with its negation and the pair average is one sample. The discretization
    tolerance is the change of the estimate when the same paths are read on
    the grid of step 2 dt.
    """
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    samples = _moment_samples(cfg, y, order, n_paths, n_steps, seed, antithetic, 1)
    mean = math.fsum(samples) / samples.size
    var = math.fsum((samples - mean) ** 2) / (samples.size - 1)
    tol = 0.0
    if discretization and n_steps % 2 == 0 and n_steps >= 4:
        coarse = _moment_samples(cfg, y, order, n_paths, n_steps, seed, antithetic, 2)
        tol = abs(mean - math.fsum(coarse) / coarse.size)
    return McEstimate(mean, var, math.sqrt(var / samples.size), samples.size, seed, tol, order, antithetic)


def write_values_csv(handle, values) -> None:
    """One row per path: path_id, value."""
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["path_id", "value"])
    for i, v in enumerate(np.asarray(values, dtype=float)):
        writer.writerow([i, repr(float(v))])


def batch_values(batch: PathBatch, cfg: ModelConfig, y=None) -> np.ndarray:
    """DSLT of every path of an existing batch (grid must match cfg.t)."""
    _check_grid(batch.n_steps, batch.dt, cfg)
    cols = dslt_columns(batch.values, cfg.k, cfg.epsilon, _as_y(y, cfg.d))
    return horizon_values(cols, batch.dt)[:, 0, 0, 0]
