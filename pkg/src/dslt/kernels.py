"""Gaussian mollifier f_eps and its multi-index partial derivatives.

The derivatives use the closed form

    d^k f_eps(x) = f_eps(x) * prod_i (-1)^{k_i} eps^{-k_i/2} He_{k_i}(x_i / sqrt(eps)),

with He_m the probabilists' Hermite polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["MollifiedKernel", "hermite_e", "heat_kernel", "kernel_derivative"]


def hermite_e(m: int, x):
    """Probabilists' Hermite polynomial He_m by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    if m < 0:
        raise ValueError("Hermite order must be nonnegative")
    prev = np.ones_like(x)
    if m == 0:
        return prev
    cur = x.copy()
    for j in range(1, m):
        prev, cur = cur, x * cur - j * prev
    return cur


def _as_points(x, d: int | None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if d is not None and x.shape[-1] != d:
        raise ValueError(f"point has {x.shape[-1]} coordinates, expected {d}")
    return x


def heat_kernel(x, epsilon: float):
    """(2 pi eps)^{-d/2} exp(-|x|^2 / (2 eps)); the last axis of ``x`` is the coordinate."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = _as_points(x, None)
    d = x.shape[-1]
    return (2.0 * np.pi * epsilon) ** (-d / 2) * np.exp(-np.sum(x * x, axis=-1) / (2.0 * epsilon))


def kernel_derivative(x, epsilon: float, k: Sequence[int]):
    """Partial derivative of ``heat_kernel`` of multi-index ``k`` at ``x``."""
    k = tuple(int(v) for v in k)
    x = _as_points(x, len(k))
    out = heat_kernel(x, epsilon)
    root = np.sqrt(epsilon)
    for i, ki in enumerate(k):
        if ki:
            out = out * ((-1.0) ** ki * epsilon ** (-ki / 2) * hermite_e(ki, x[..., i] / root))
    return out


@dataclass(frozen=True)
class MollifiedKernel:
    """f_eps^{(k)} bound to fixed (epsilon, k)."""

    epsilon: float
    k: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def d(self) -> int:
        return len(self.k)

    def __call__(self, x):
        return kernel_derivative(x, self.epsilon, self.k)
