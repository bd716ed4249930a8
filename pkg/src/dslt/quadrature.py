"""Graded-mesh quadrature over the gap simplex {a, b, c >= 0, a + b + c <= t}.

Integrals of the form

    int_{a+b+c<t} g(a, b, c) (t - a - b - c) da db dc

arise after the base time of a pair of intervals is integrated out. The
simplex is mapped to the unit cube by a = t x, c = (t - a) y,
b = (t - a - c) z; each unit axis carries a composite Gauss-Legendre rule on
panels that shrink geometrically toward both endpoints, which resolves the
power-law and multi-scale behaviour of the integrands near the faces
a = 0, b = 0, c = 0 without ever evaluating on a face. Accuracy is
controlled by refining along a fixed ladder of rules until two successive
levels agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = ["QuadResult", "NonConvergenceError", "graded_rule", "LADDER", "simplex_gap_integral"]

DEFAULT_BUDGET = 10_000_000


class NonConvergenceError(RuntimeError):
    """The refinement ladder ran out of budget before meeting the tolerance."""

    def __init__(self, message: str, result: "QuadResult"):
        super().__init__(message)
        self.result = result


@dataclass
class QuadResult:
    value: float
    abs_error_estimate: float
    n_evals: int
    region: str = "total"
    converged: bool = True
    diverging: bool = False
    history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error": self.abs_error_estimate,
            "n_evals": self.n_evals,
            "region": self.region,
            "converged": self.converged,
            "diverging": self.diverging,
        }


@lru_cache(maxsize=None)
def graded_rule(order: int, levels: int, upper_levels: int, ratio: float = 0.2):
    """Nodes and weights on [0, 1] for a geometrically graded composite Gauss rule.

    Breakpoints are ``ratio**j / 2`` for j = 0..levels near 0 and the mirror
    image with ``upper_levels`` panels near 1.
    """
    lower = [0.5 * ratio**j for j in range(levels, 0, -1)]
    upper = [1.0 - 0.5 * ratio**j for j in range(1, upper_levels + 1)]
    breaks = np.array([0.0] + lower + [0.5] + upper + [1.0])
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    nodes = (half[:, None] * (x + 1.0) + lo[:, None]).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


# (gauss order, panels toward 0, panels toward 1); cumulative cost of the
# first three levels stays under the default budget of 1e7 evaluations
LADDER: tuple[tuple[int, int, int], ...] = (
    (4, 10, 4),
    (6, 14, 5),
    (8, 16, 5),
    (10, 20, 6),
    (12, 24, 7),
)


def _apply_rule(g: Callable, t: float, rule, chunk: int = 1 << 21) -> float:
    x, w = rule
    n = x.size
    total = 0.0
    rows = max(1, chunk // (n * n))
    for start in range(0, n, rows):
        xa = x[start : start + rows, None, None]
        wa = w[start : start + rows, None, None]
        a = t * xa
        span_c = t - a
        c = span_c * x[None, :, None]
        span_b = t - a - c
        b = span_b * x[None, None, :]
        jac = t * wa * span_c * w[None, :, None] * span_b * w[None, None, :]
        vals = g(a, b, c) * (span_b * (1.0 - x[None, None, :]))
        total += float(np.sum(vals * jac))
    return total


def simplex_gap_integral(
    g: Callable,
    t: float,
    rel_tol: float = 1e-4,
    abs_tol: float = 0.0,
    budget: int = DEFAULT_BUDGET,
    region: str = "total",
    raise_on_failure: bool = False,
) -> QuadResult:
    """Integrate ``g(a, b, c) * (t - a - b - c)`` over the gap simplex.

    ``g`` must accept broadcastable arrays. The error estimate is the change
    between the last two ladder levels. When the budget is exhausted first,
    the result is flagged non-converged (and ``diverging`` if every
    refinement increased the magnitude); with ``raise_on_failure`` a
    :class:`NonConvergenceError` carrying the result is raised instead.
    """
    if t <= 0:
        return QuadResult(0.0, 0.0, 0, region)
    history: list[float] = []
    used = 0
    value, err = 0.0, np.inf
    for order, levels, upper in LADDER:
        rule = graded_rule(order, levels, upper)
        cost = rule[0].size ** 3
        if history and used + cost > budget:
            break
        history.append(_apply_rule(g, t, rule))
        used += cost
        value = history[-1]
        if len(history) >= 2:
            err = abs(history[-1] - history[-2])
            if err <= max(rel_tol * abs(value), abs_tol):
                return QuadResult(value, err, used, region, True, False, history)
    mags = np.abs(history)
    diverging = len(history) >= 3 and bool(np.all(np.diff(mags) > 0))
    result = QuadResult(value, err, used, region, False, diverging, history)
    if raise_on_failure:
        raise NonConvergenceError(
            f"quadrature on {region} did not reach rel_tol={rel_tol} within {budget} evaluations "
            f"(estimate {value:.6g} +/- {err:.2g})",
            result,
        )
    return result
