"""Problem statement shared by every module: Hurst index, dimension, multi-index, horizon, mollification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence


class DomainError(ValueError):
    """Raised when a parameter lies outside its mathematical domain.

    ``field`` names the offending parameter when it is known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def check_hurst(H: float) -> float:
    H = float(H)
    if not 0.0 < H < 1.0:
        raise DomainError(f"Hurst index H must lie in (0, 1), got {H}", "H")
    return H


@dataclass(frozen=True)
class ModelConfig:
    """Parameters of the mollified k-th derivative of self-intersection local time.

    Attributes
    ----------
    H : float
        Hurst index in (0, 1).
    d : int
        Spatial dimension of the fBm.
    k : tuple of int
        Multi-index of derivative orders, one entry per coordinate.
    t : float
        Time horizon of the simplex ``0 < r < s < t``.
    epsilon : float
        Variance of the Gaussian mollifier.
    """

    H: float
    d: int = 1
    k: tuple[int, ...] = field(default=(1,))
    t: float = 1.0
    epsilon: float = 1e-2

    def __post_init__(self) -> None:
        object.__setattr__(self, "H", check_hurst(self.H))
        k = tuple(int(v) for v in (self.k if isinstance(self.k, Sequence) else (self.k,)))
        object.__setattr__(self, "k", k)
        if int(self.d) < 1:
            raise DomainError(f"dimension d must be >= 1, got {self.d}", "d")
        object.__setattr__(self, "d", int(self.d))
        if len(k) != self.d:
            raise DomainError(f"multi-index k has {len(k)} entries but d = {self.d}", "k")
        if any(v < 0 for v in k):
            raise DomainError(f"multi-index entries must be nonnegative, got {k}", "k")
        if not self.t > 0:
            raise DomainError(f"horizon t must be positive, got {self.t}", "t")
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}", "epsilon")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def k_abs(self) -> int:
        """|k|, the total derivative order."""
        return sum(self.k)

    @property
    def n_odd(self) -> int:
        """Number of odd entries of k."""
        return sum(v % 2 for v in self.k)

    def replace(self, **changes) -> "ModelConfig":
        values = dict(H=self.H, d=self.d, k=self.k, t=self.t, epsilon=self.epsilon)
        values.update(changes)
        return ModelConfig(**values)

    def to_dict(self) -> dict:
        return {"H": self.H, "d": self.d, "k": list(self.k), "t": self.t, "epsilon": self.epsilon}
