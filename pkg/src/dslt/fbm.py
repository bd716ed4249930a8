"""Exact simulation of d-dimensional fractional Brownian motion on a uniform grid.

Increments are fractional Gaussian noise generated by circulant embedding
(Davies-Harte) with an FFT; a Cholesky factorization of the increment
covariance is the fallback when the embedding is not nonnegative definite.
Each path draws from its own seed substream ``(seed, path_index)`` so the
batch is identical however it is chunked.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import DomainError, ModelConfig, check_hurst

__all__ = [
    "PathBatch",
    "NondeterminismReport",
    "FactorizationError",
    "fbm_covariance",
    "fgn_autocovariance",
    "increment_factor",
    "implied_path_covariance",
    "sample_paths",
    "nondeterminism_ratios",
]

CLIP_TOL = 1e-10
MAGIC = b"FBMP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIdIIIdq")


class FactorizationError(RuntimeError):
    """The Cholesky fallback met a covariance that is not positive definite."""


def fbm_covariance(s, t, H: float):
    """Covariance E[B_s B_t] = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2.

    Works elementwise on arrays.
    """
    H = check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("fbm_covariance needs nonnegative times")
    two_h = 2.0 * H
    out = 0.5 * (s**two_h + t**two_h - np.abs(t - s) ** two_h)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(n: int, H: float, dt: float) -> np.ndarray:
    """Autocovariance of fBm increments of step ``dt`` at lags 0..n."""
    j = np.arange(n + 1, dtype=float)
    two_h = 2.0 * H
    return 0.5 * dt**two_h * (np.abs(j + 1) ** two_h - 2.0 * j**two_h + np.abs(j - 1) ** two_h)


@dataclass(frozen=True)
class _Factor:
    method: str  # "circulant" or "cholesky"
    n: int
    sqrt_eig: np.ndarray | None = None  # scaled sqrt eigenvalues, length 2n
    chol: np.ndarray | None = None  # lower factor, n x n
    min_eigenvalue: float = 0.0


@lru_cache(maxsize=32)
def increment_factor(n_steps: int, H: float, dt: float, method: str = "auto") -> _Factor:
    """Factor of the fGn covariance used by :func:`sample_paths`.

    ``method`` is ``"auto"`` (circulant, Cholesky if the embedding fails),
    ``"circulant"`` or ``"cholesky"``.
    """
    if method not in ("auto", "circulant", "cholesky"):
        raise ValueError(f"unknown method {method!r}")
    gamma = fgn_autocovariance(n_steps, H, dt)
    if method != "cholesky":
        row = np.concatenate([gamma[: n_steps + 1], gamma[1:n_steps][::-1]])
        eig = np.fft.fft(row).real
        lo = float(eig.min())
        if lo > -CLIP_TOL:
            eig = np.maximum(eig, 0.0)
            m = row.size
            return _Factor("circulant", n_steps, sqrt_eig=np.sqrt(eig / m), min_eigenvalue=lo)
        if method == "circulant":
            raise FactorizationError(f"circulant embedding has eigenvalue {lo:.3e}")
    idx = np.arange(n_steps)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"increment covariance is not positive definite (n={n_steps}, H={H}, dt={dt})"
        ) from exc
    return _Factor("cholesky", n_steps, chol=chol)


def implied_path_covariance(n_steps: int, H: float, dt: float, method: str = "auto") -> np.ndarray:
    """Covariance of (B_{t_1}, ..., B_{t_n}) implied by the generator's factor.

    Rebuilt from the factor itself (clipped eigenvalues or Cholesky
    product), so comparing it to :func:`fbm_covariance` checks the sampler
    without any statistics.
    """
    fac = increment_factor(n_steps, H, dt, method)
    if fac.method == "circulant":
        m = fac.sqrt_eig.size
        row = np.fft.ifft(fac.sqrt_eig**2 * m).real
        idx = np.arange(n_steps)
        inc_cov = row[np.abs(idx[:, None] - idx[None, :])]
    else:
        inc_cov = fac.chol @ fac.chol.T
    return np.cumsum(np.cumsum(inc_cov, axis=0), axis=1)


@dataclass
class PathBatch:
    """Simulated fBm paths on the grid ``j * dt``, ``j = 0..n_steps``.

    ``values`` has shape ``(n_paths, n_steps + 1, d)`` and every path starts
    at the origin.
    """

    values: np.ndarray
    dt: float
    seed: int
    H: float

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps

    def __neg__(self) -> "PathBatch":
        return PathBatch(-self.values, self.dt, self.seed, self.H)

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(
            MAGIC, FORMAT_VERSION, self.H, self.d, self.n_steps, self.n_paths, self.dt, self.seed
        )
        return header + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PathBatch":
        magic, version, H, d, n_steps, n_paths, dt, seed = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError("not a PathBatch file (bad magic)")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported PathBatch version {version}")
        values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        expected = n_paths * (n_steps + 1) * d
        if values.size != expected:
            raise ValueError(f"PathBatch payload has {values.size} values, expected {expected}")
        return cls(values.reshape(n_paths, n_steps + 1, d).astype(float), dt, seed, H)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "PathBatch":
        return cls.from_bytes(Path(path).read_bytes())

    def write_csv(self, handle) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["path_id", "t"] + [f"x_{i + 1}" for i in range(self.d)])
        times = self.times
        for p in range(self.n_paths):
            for j in range(self.n_steps + 1):
                writer.writerow([p, repr(float(times[j]))] + [repr(float(v)) for v in self.values[p, j]])


def _path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path_index,)))


def sample_paths(
    cfg: ModelConfig,
    n_steps: int,
    n_paths: int,
    seed: int,
    *,
    horizon: float | None = None,
    method: str = "auto",
    first_path: int = 0,
    chunk: int = 256,
) -> PathBatch:
    """Sample ``n_paths`` exact fBm paths on ``[0, horizon]`` (default ``cfg.t``).

    The d coordinates are independent copies drawn in coordinate-major order
    from the path's own substream. ``first_path`` offsets the substream
    index, so batches can be generated in pieces.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    horizon = cfg.t if horizon is None else float(horizon)
    dt = horizon / n_steps
    fac = increment_factor(n_steps, cfg.H, dt, method)
    d = cfg.d
    values = np.zeros((n_paths, n_steps + 1, d))
    for start in range(0, n_paths, chunk):
        stop = min(start + chunk, n_paths)
        if fac.method == "circulant":
            m = fac.sqrt_eig.size
            z = np.empty((stop - start, d, 2, m))
            for i, p in enumerate(range(start, stop)):
                z[i] = _path_rng(seed, first_path + p).standard_normal((d, 2, m))
            w = (z[:, :, 0, :] + 1j * z[:, :, 1, :]) * fac.sqrt_eig
            inc = np.fft.fft(w, axis=-1).real[..., :n_steps]
        else:
            z = np.empty((stop - start, d, n_steps))
            for i, p in enumerate(range(start, stop)):
                z[i] = _path_rng(seed, first_path + p).standard_normal((d, n_steps))
            inc = z @ fac.chol.T
        values[start:stop, 1:, :] = np.cumsum(inc, axis=-1).transpose(0, 2, 1)
    return PathBatch(values, dt, int(seed), cfg.H)


@dataclass(frozen=True)
class NondeterminismReport:
    """Extremes of Var(sum x_i dB_i) / sum x_i^2 (s_i - s_{i-1})^{2H} over random trials."""

    n: int
    H: float
    ratio_min: float
    ratio_max: float
    n_trials: int


def nondeterminism_ratios(H: float, n: int, n_trials: int, seed: int) -> NondeterminismReport:
    """Measure the two-sided local nondeterminism constants empirically.

    Partitions ``0 < s_1 < ... < s_n <= 1`` are sorted uniforms and the
    coefficients are standard normal; the variance is exact, built from
    :func:`fbm_covariance`.
    """
    H = check_hurst(H)
    if n < 1 or n_trials < 1:
        raise ValueError("n and n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, 0.0
    for _ in range(n_trials):
        s = np.sort(rng.uniform(0.0, 1.0, n))
        s = np.concatenate([[0.0], s])
        x = rng.standard_normal(n)
        cov_b = fbm_covariance(s[:, None], s[None, :], H)
        # increment covariance by second differences of the path covariance
        inc = cov_b[1:, 1:] - cov_b[:-1, 1:] - cov_b[1:, :-1] + cov_b[:-1, :-1]
        var = float(x @ inc @ x)
        ref = float(np.sum(x**2 * np.diff(s) ** (2 * H)))
        if ref <= 0:
            continue
        ratio = var / ref
        lo, hi = min(lo, ratio), max(hi, ratio)
    return NondeterminismReport(n=n, H=H, ratio_min=lo, ratio_max=hi, n_trials=n_trials)
