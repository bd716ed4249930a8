"""Second moments of the mollified DSLT at y = 0 and the existence regimes.

For independent coordinates, integrating out the Fourier variables gives

    E[a_eps a_eta] = (2 pi)^{-2d} int_{D^2} prod_i (-1)^{k_i} P_{k_i}(lam + eps, rho + eta, mu)

with P_m the exact pair integral. D^2 splits into six interleavings of
[r, s] and [r', s']; the three with r < r' are the regions D1, D2, D3 and
the other three are their mirror images, which contribute the same
integrand with eps and eta exchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .gaussian_moments import Region, pair_integral_exact, region_covariances
from .quadrature import DEFAULT_BUDGET, NonConvergenceError, QuadResult, simplex_gap_integral

__all__ = [
    "RegimeVerdict",
    "SecondMoment",
    "existence_regime",
    "moment_integrand",
    "regularized_det",
    "region_integrand",
    "second_moment_quadrature",
    "mc_integration_oracle",
    "cauchy_diagnostic",
]


@dataclass(frozen=True)
class RegimeVerdict:
    """Whether the limit exists in L^2 / every L^p, with the thresholds on H."""

    l2_exists: bool
    lp_exists: bool
    l2_threshold: float
    lp_threshold: float

    def to_dict(self) -> dict:
        return {
            "l2_exists": self.l2_exists,
            "lp_exists": self.lp_exists,
            "l2_threshold": self.l2_threshold,
            "lp_threshold": self.lp_threshold,
        }


def existence_regime(H: float, k, d: int) -> RegimeVerdict:
    """L^2 needs H < min(2/(2|k|+d), 1/(|k|+d-#), 1/d); L^p needs H(|k|+d) < 1."""
    k = tuple(int(v) for v in k)
    if len(k) != d:
        raise ValueError(f"multi-index {k} does not match d = {d}")
    k_abs = sum(k)
    n_odd = sum(v % 2 for v in k)
    l2 = min(2.0 / (2 * k_abs + d), 1.0 / (k_abs + d - n_odd), 1.0 / d)
    lp = 1.0 / (k_abs + d)
    return RegimeVerdict(H < l2, H < lp, l2, lp)


def moment_integrand(k, lam_a, rho_b, mu, det=None):
    """(2 pi)^{-2d} prod_i (-1)^{k_i} P_{k_i}(lam_a, rho_b, mu) with regularized variances."""
    d = len(k)
    out = (2.0 * np.pi) ** (-2 * d)
    cache: dict[int, np.ndarray] = {}
    for ki in k:
        if ki not in cache:
            cache[ki] = (-1.0) ** ki * pair_integral_exact(ki, lam_a, rho_b, mu, det=det)
        out = out * cache[ki]
    return out


def regularized_det(lam, rho, mu, eps, eta):
    """(lam + eps)(rho + eta) - mu^2, expanded so the eps terms never cancel.

    Rounding noise in lam*rho - mu^2 (nearly collinear increments) is clipped
    at zero, which is its exact lower bound.
    """
    return np.maximum(lam * rho - mu * mu, 0.0) + eps * rho + eta * lam + eps * eta


def region_integrand(cfg: ModelConfig, eta: float, region: Region | str):
    """g(a, b, c) on one region, averaged over the mirror ordering (eps <-> eta)."""
    region = Region(region)
    eps = cfg.epsilon
    k, H = cfg.k, cfg.H

    def g(a, b, c):
        lam, rho, mu = region_covariances(region, a, b, c, H)
        val = moment_integrand(k, lam + eps, rho + eta, mu, regularized_det(lam, rho, mu, eps, eta))
        if eta != eps:
            mirror = moment_integrand(k, lam + eta, rho + eps, mu, regularized_det(lam, rho, mu, eta, eps))
            val = 0.5 * (val + mirror)
        return val

    return g


@dataclass
class SecondMoment:
    """E[a_eps(0) a_eta(0)]: total = 2 * (D1 + D2 + D3)."""

    total: QuadResult
    per_region: dict[str, QuadResult]
    regime: RegimeVerdict

    @property
    def value(self) -> float:
        return self.total.value

    @property
    def error(self) -> float:
        return self.total.abs_error_estimate

    def to_dict(self) -> dict:
        return {
            "value": self.total.value,
            "error": self.total.abs_error_estimate,
            "per_region": {name: r.to_dict() for name, r in self.per_region.items()},
            "n_evals": self.total.n_evals,
            "converged": self.total.converged,
            "regime": self.regime.to_dict(),
        }


def _combine(parts: dict[str, QuadResult], factor: float = 2.0) -> QuadResult:
    value = factor * sum(r.value for r in parts.values())
    err = factor * sum(r.abs_error_estimate for r in parts.values())
    return QuadResult(
        value,
        err,
        sum(r.n_evals for r in parts.values()),
        "total",
        all(r.converged for r in parts.values()),
        any(r.diverging for r in parts.values()),
    )


def integrate_regions(make_integrand, t: float, rel_tol: float, budget: int, raise_on_failure: bool):
    parts = {}
    for region in Region:
        parts[region.value] = simplex_gap_integral(
            make_integrand(region),
            t,
            rel_tol=rel_tol,
            budget=budget,
            region=region.value,
            raise_on_failure=False,
        )
    # a region that is negligible (D3 vanishes at H = 1/2) is judged against the total scale
    scale = sum(abs(r.value) for r in parts.values())
    for r in parts.values():
        if not r.converged and r.abs_error_estimate <= rel_tol * scale:
            r.converged, r.diverging = True, False
    failed = [r for r in parts.values() if not r.converged]
    if failed and raise_on_failure:
        raise NonConvergenceError(
            f"quadrature on {failed[0].region} did not reach rel_tol={rel_tol} within {budget} evaluations "
            f"(estimate {failed[0].value:.6g} +/- {failed[0].abs_error_estimate:.2g})",
            failed[0],
        )
    return parts


def second_moment_quadrature(
    cfg: ModelConfig,
    eta: float | None = None,
    rel_tol: float = 1e-4,
    budget: int = DEFAULT_BUDGET,
    raise_on_failure: bool = False,
) -> SecondMoment:
    """E[a^{(k)}_{t,eps}(0) a^{(k)}_{t,eta}(0)] by graded quadrature on each region.

    ``eta`` defaults to ``cfg.epsilon``. Per-region values are single
    orderings (r < r'); the total doubles their sum to cover the mirrors.
    """
    eta = cfg.epsilon if eta is None else float(eta)
    if eta <= 0:
        raise ValueError("eta must be positive")
    parts = integrate_regions(
        lambda region: region_integrand(cfg, eta, region), cfg.t, rel_tol, budget, raise_on_failure
    )
    return SecondMoment(_combine(parts), parts, existence_regime(cfg.H, cfg.k, cfg.d))


def mc_integration_oracle(
    cfg: ModelConfig,
    eta: float | None = None,
    n_points: int = 10_000_000,
    seed: int = 0,
    batch: int = 500_000,
) -> tuple[float, float]:
    """Crude Monte Carlo over [0, t]^4 of the same second-moment integrand.

    Works directly on absolute times (r, s, r', s'), with no region split and
    no gap coordinates. Returns (estimate, standard error).
    """
    eta = cfg.epsilon if eta is None else float(eta)
    rng = np.random.default_rng(seed)
    t, h2 = cfg.t, 2.0 * cfg.H
    sums = []
    done = 0
    while done < n_points:
        m = min(batch, n_points - done)
        r, s, rp, sp = rng.uniform(0.0, t, size=(4, m))
        keep = (r < s) & (rp < sp)
        r, s, rp, sp = r[keep], s[keep], rp[keep], sp[keep]
        lam = (s - r) ** h2
        rho = (sp - rp) ** h2
        mu = 0.5 * (np.abs(sp - r) ** h2 + np.abs(s - rp) ** h2 - np.abs(sp - s) ** h2 - np.abs(r - rp) ** h2)
        det = regularized_det(lam, rho, mu, cfg.epsilon, eta)
        vals = np.zeros(m)
        vals[keep] = moment_integrand(cfg.k, lam + cfg.epsilon, rho + eta, mu, det)
        sums.append(vals)
        done += m
    vals = np.concatenate(sums) * t**4
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


@dataclass
class CauchyRow:
    eps_a: float
    eps_b: float
    m_aa: float
    m_bb: float
    m_ab: float
    increment: float
    error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cauchy_diagnostic(cfg: ModelConfig, eps_ladder, rel_tol: float = 1e-6, budget: int = DEFAULT_BUDGET):
    """E[(a_{eps_i} - a_{eps_{i+1}})^2] along a strictly decreasing ladder.

    Every moment is computed on the same ladder of rules, so quadrature
    errors largely cancel in the difference.
    """
    ladder = [float(e) for e in eps_ladder]
    if len(ladder) < 2 or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing with >= 2 entries")
    diag = {}
    for e in ladder:
        diag[e] = second_moment_quadrature(cfg.replace(epsilon=e), e, rel_tol, budget)
    rows = []
    for ea, eb in zip(ladder, ladder[1:]):
        cross = second_moment_quadrature(cfg.replace(epsilon=ea), eb, rel_tol, budget)
        inc = diag[ea].value + diag[eb].value - 2.0 * cross.value
        err = diag[ea].error + diag[eb].error + 2.0 * cross.error
        rows.append(CauchyRow(ea, eb, diag[ea].value, diag[eb].value, cross.value, inc, err))
    return rows
