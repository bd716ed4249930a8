"""Empirical Hölder exponents of the mollified DSLT in time and in space.

Increments of the functional are sampled on shared paths, their n-th
absolute moments are regressed on the lag in log-log coordinates, and the
slope divided by n estimates the exponent. All runs are at a fixed finite
eps, so the fitted exponents describe the mollified object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ModelConfig
from .estimator import dslt_columns, horizon_values
from .fbm import sample_paths

__all__ = [
    "HolderFit",
    "FitDegenerateError",
    "fit_power_law",
    "holder_fit",
    "increment_samples",
    "theorem_exponents",
]


class FitDegenerateError(ValueError):
    """Moments vanish or are not positive, so log-log regression is undefined."""


@dataclass
class HolderFit:
    variable: str
    lags: list[float]
    moment_order: int
    moments: list[float]
    slope: float
    r_squared: float
    intercept: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.lags, self.moments))


def theorem_exponents(H: float, k, d: int) -> dict[str, float]:
    """Upper ends of the guaranteed Hölder ranges: time 1 - H(|k|+d), space min(1, (1 - H(|k|+d))/H)."""
    k_abs = sum(int(v) for v in k)
    gap = 1.0 - H * (k_abs + d)
    return {"time": gap, "space": min(1.0, gap / H)}


def fit_power_law(lags, moments, order: int, variable: str = "time") -> HolderFit:
    """Least-squares fit of log moment = intercept + slope * log lag; slope is per unit order."""
    lags = np.asarray(lags, dtype=float)
    moments = np.asarray(moments, dtype=float)
    if lags.size != moments.size or lags.size < 2:
        raise ValueError("need matching lags and moments, at least two")
    if np.any(np.diff(lags) <= 0) or lags[0] <= 0:
        raise ValueError("lags must be positive and strictly increasing")
    tiny = np.finfo(float).tiny
    if np.any(~np.isfinite(moments)) or np.any(moments <= tiny):
        raise FitDegenerateError("moments must be finite and positive")
    xs, ys = np.log(lags), np.log(moments)
    A = np.column_stack([np.ones_like(xs), xs])
    (intercept, slope), *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - A @ np.array([intercept, slope])
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    r2 = min(1.0, max(0.0, r2))
    return HolderFit(variable, lags.tolist(), order, moments.tolist(), float(slope) / order, r2, float(intercept))


def holder_fit(samples, lags, order: int = 2, variable: str = "time") -> HolderFit:
    """Exponent from increments ``samples[path, lag]`` via E|increment|^n."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != len(lags):
        raise ValueError("samples must have shape (n_paths, n_lags)")
    if order < 1:
        raise ValueError("order must be >= 1")
    moments = np.mean(np.abs(samples) ** order, axis=0)
    return fit_power_law(lags, moments, order, variable)


def increment_samples(
    cfg: ModelConfig,
    variable: str,
    lags: Sequence[float],
    n_paths: int,
    n_steps: int,
    seed: int,
    y=None,
    chunk: int = 128,
) -> tuple[np.ndarray, list[float]]:
    """Differences a(base + lag) - a(base) on shared paths.

    Time lags extend the horizon t to t + h and are snapped to the grid
    step t / n_steps; the paths are sampled once on [0, t + max h] and every
    horizon is read from the same column sums. Space lags move y along the
    first coordinate axis. Returns the (n_paths, n_lags) matrix and the lags
    actually used.
    """
    lags = [float(h) for h in lags]
    if variable not in ("time", "space"):
        raise ValueError("variable must be 'time' or 'space'")
    if any(h < 0 for h in lags):
        raise ValueError("lags must be nonnegative")
    base_y = np.zeros(cfg.d) if y is None else np.asarray(y, dtype=float)
    dt = cfg.t / n_steps
    out = np.empty((n_paths, len(lags)))
    if variable == "time":
        shift = [int(round(h / dt)) for h in lags]
        used = [s * dt for s in shift]
        total = n_steps + max(shift)
        for start in range(0, n_paths, chunk):
            stop = min(start + chunk, n_paths)
            batch = sample_paths(cfg, total, stop - start, seed, horizon=total * dt, first_path=start)
            cols = dslt_columns(batch.values, cfg.k, cfg.epsilon, base_y)
            idx = [n_steps] + [n_steps + s for s in shift]
            vals = horizon_values(cols, dt, idx)[:, 0, 0, :]
            out[start:stop] = vals[:, 1:] - vals[:, :1]
    else:
        used = list(lags)
        ys = np.repeat(base_y[None, :], len(lags) + 1, axis=0)
        ys[1:, 0] += np.asarray(lags)
        for start in range(0, n_paths, chunk):
            stop = min(start + chunk, n_paths)
            batch = sample_paths(cfg, n_steps, stop - start, seed, first_path=start)
            cols = dslt_columns(batch.values, cfg.k, cfg.epsilon, ys)
            vals = horizon_values(cols, dt)[:, :, 0, 0]
            out[start:stop] = vals[:, 1:] - vals[:, :1]
    return out, used


def run_holder(cfg: ModelConfig, variable: str, lags, n_paths: int, n_steps: int, seed: int, order: int = 2) -> HolderFit:
    samples, used = increment_samples(cfg, variable, lags, n_paths, n_steps, seed)
    return holder_fit(samples, used, order, variable)


def log_spaced_lags(lo: float, hi: float, n: int) -> list[float]:
    return [float(v) for v in np.exp(np.linspace(math.log(lo), math.log(hi), n))]
