"""Wiener-chaos structure of the first-derivative DSLT (d = 1, k = 1).

The first chaos of a_eps = int_D f'_eps(B_s - B_r) dr ds is I_1 of the kernel
beta_1 (eps + (s-r)^{2H})^{-3/2} 1_{[r,s]}, so its variance is

    beta_1^2 int_{D^2} (eps + lam)^{-3/2} (eps + rho)^{-3/2} mu,

which is integrated on the same gap-coordinate regions as the full second
moment. The CLT experiment at H = 2/3 compares simulated statistics against
these finite-eps quadrature targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from .config import ModelConfig, check_hurst
from .gaussian_moments import Region, region_covariances
from .quadrature import DEFAULT_BUDGET, QuadResult
from .second_moment import _combine, integrate_regions, second_moment_quadrature

__all__ = [
    "ChaosKernelParams",
    "CltReport",
    "beta_q",
    "mu_chaos",
    "g_q",
    "first_chaos_variance",
    "beta_function",
    "sigma_squared",
    "sigma_squared_routes",
    "limit_integral",
    "limit_integral_check",
    "clt_experiment",
]

CRITICAL_H = 2.0 / 3.0


@dataclass(frozen=True)
class ChaosKernelParams:
    """Chaos level 2q - 1 of the mollified functional."""

    q: int
    H: float
    epsilon: float
    t: float = 1.0

    def __post_init__(self) -> None:
        if self.q < 1:
            raise ValueError("q must be >= 1")
        check_hurst(self.H)
        if self.epsilon <= 0 or self.t <= 0:
            raise ValueError("epsilon and t must be positive")

    @property
    def beta(self) -> float:
        return beta_q(self.q)


def beta_q(q: int) -> float:
    """1 / (2^{q - 1/2} (q - 1)! sqrt(pi))."""
    if q < 1:
        raise ValueError("q must be >= 1")
    return 1.0 / (2.0 ** (q - 0.5) * math.factorial(q - 1) * math.sqrt(math.pi))


def mu_chaos(x, u1, u2, H: float):
    """E[B_{u1} (B_{x+u2} - B_x)], for x >= 0 and u1, u2 > 0."""
    h2 = 2.0 * check_hurst(H)
    x, u1, u2 = (np.asarray(v, dtype=float) for v in (x, u1, u2))
    out = 0.5 * ((x + u2) ** h2 - np.abs(x + u2 - u1) ** h2 - x**h2 + np.abs(x - u1) ** h2)
    return float(out) if out.ndim == 0 else out


def g_q(q: int, eps: float, x, u1, u2, H: float):
    """(eps + u1^{2H})^{-1/2-q} (eps + u2^{2H})^{-1/2-q} mu(x, u1, u2)^{2q-1}."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    h2 = 2.0 * H
    u1, u2 = np.asarray(u1, dtype=float), np.asarray(u2, dtype=float)
    out = (eps + u1**h2) ** (-0.5 - q) * (eps + u2**h2) ** (-0.5 - q) * np.asarray(mu_chaos(x, u1, u2, H)) ** (2 * q - 1)
    return float(out) if out.ndim == 0 else out


def _first_chaos_integrand(eps: float, H: float, region: Region):
    b1sq = beta_q(1) ** 2

    def g(a, b, c):
        lam, rho, mu = region_covariances(region, a, b, c, H)
        return b1sq * mu * (eps + lam) ** -1.5 * (eps + rho) ** -1.5

    return g


def first_chaos_variance(
    eps: float,
    t: float = 1.0,
    H: float = CRITICAL_H,
    rel_tol: float = 1e-4,
    budget: int = DEFAULT_BUDGET,
) -> QuadResult:
    """E|I_1(f_{1,eps})|^2 by graded quadrature over the three orderings (doubled)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    H = check_hurst(H)
    parts = integrate_regions(lambda region: _first_chaos_integrand(eps, H, region), t, rel_tol, budget, False)
    total = _combine(parts)
    total.history = [parts[r.value].value for r in Region]
    return total


def beta_function(a: float, b: float) -> float:
    """Euler Beta function through log-gamma."""
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def sigma_squared_routes(t: float = 1.0) -> tuple[float, float]:
    """sigma^2 by log-gamma Beta and by B(2, z) = 1 / (z (z + 1))."""
    if t <= 0:
        raise ValueError("t must be positive")
    z = 1.0 / 3.0
    scale = t ** (4.0 / 3.0) / (8.0 * math.pi)
    return scale * beta_function(2.0, z), scale / (z * (z + 1.0))


def sigma_squared(t: float = 1.0) -> float:
    """Limiting variance t^{4/3} B(2, 1/3) / (8 pi) of the normalized statistic."""
    return sigma_squared_routes(t)[0]


def limit_integral(M: float, method: str = "closed") -> float:
    """(int_0^M a (1 + a^{4/3})^{-3/2} da)^2.

    ``method="closed"`` uses the antiderivative in u = a^{2/3},
    1.5 (asinh u - u / sqrt(1 + u^2)); ``"quad"`` integrates numerically.
    """
    if M < 0:
        raise ValueError("M must be nonnegative")
    if method == "closed":
        u = M ** (2.0 / 3.0)
        inner = 1.5 * (math.asinh(u) - u / math.sqrt(1.0 + u * u))
    elif method == "quad":
        f = lambda a: a * (1.0 + a ** (4.0 / 3.0)) ** -1.5  # noqa: E731
        pts = [p for p in np.logspace(0, math.log10(max(M, 1.0)), 12) if p < M]
        inner = integrate.quad(f, 0.0, M, points=pts or None, limit=500, epsabs=0, epsrel=1e-12)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return inner * inner


def limit_integral_check(M: float, method: str = "closed") -> float:
    """limit_integral(M) / (log 1/eps)^2 with the upper limit M = eps^{-3/4}.

    Since log(1/eps) = (4/3) log M this tends to 9/16; the inner integral
    behaves like log M - 0.46, so the approach is only logarithmic.
    """
    if M <= 1:
        raise ValueError("M must exceed 1")
    return limit_integral(M, method) / ((4.0 / 3.0) * math.log(M)) ** 2


@dataclass
class CltReport:
    """Finite-eps variance ladder and normality diagnostics of (log 1/eps)^{-1} a'_eps(0)."""

    t: float
    eps_ladder: list[float]
    variance_ratios: list[float]
    variance_ratio_errors: list[float]
    first_chaos_ratios: list[float]
    region_shares: list[dict[str, float]]
    sigma_sq_target: float
    mc_eps: float
    mc_mean: float
    mc_variance: float
    mc_variance_se: float
    mc_discretization_tol: float
    mc_skewness: float
    mc_kurtosis_excess: float
    ks_statistic: float
    ks_critical_1pct: float
    n_paths: int
    n_steps: int
    seed: int
    statistics: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def quadrature_target(self) -> float:
        return self.variance_ratios[self.eps_ladder.index(self.mc_eps)]

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "statistics"}
        out["quadrature_target"] = self.quadrature_target
        return out


def clt_experiment(
    t: float,
    eps_ladder,
    n_paths: int,
    n_steps: int,
    seed: int,
    rel_tol: float = 1e-4,
    budget: int = DEFAULT_BUDGET,
) -> CltReport:
    """Variance ladder by quadrature plus a simulated sample at the smallest eps.

    ``n_paths`` independent paths are drawn, each paired with its negation.
    Skewness, kurtosis and the KS distance to the fitted N(0, var) use the
    independent half only, since the mirrored half is symmetric by
    construction.
    """
    from .estimator import dslt_batch

    ladder = sorted({float(e) for e in eps_ladder}, reverse=True)
    if not ladder:
        raise ValueError("eps ladder is empty")
    if any(e <= 0 or e >= 1 for e in ladder):
        raise ValueError("eps values must lie in (0, 1) so that log(1/eps) > 0")
    cfg = ModelConfig(H=CRITICAL_H, d=1, k=(1,), t=t, epsilon=ladder[0])

    ratios, ratio_errs, chaos_ratios, shares = [], [], [], []
    for e in ladder:
        norm = math.log(1.0 / e) ** 2
        sm = second_moment_quadrature(cfg.replace(epsilon=e), e, rel_tol, budget)
        fc = first_chaos_variance(e, t, CRITICAL_H, rel_tol, budget)
        ratios.append(sm.value / norm)
        ratio_errs.append(sm.error / norm)
        chaos_ratios.append(fc.value / norm)
        parts = {name: r.value for name, r in sm.per_region.items()}
        tot = sum(parts.values())
        shares.append({name: v / tot for name, v in parts.items()})

    mc_eps = ladder[-1]
    mc_cfg = cfg.replace(epsilon=mc_eps)
    scale = 1.0 / math.log(1.0 / mc_eps)
    fine = dslt_batch(mc_cfg, n_paths, n_steps, seed) * scale
    coarse = dslt_batch(mc_cfg, n_paths, n_steps, seed, stride=2) * scale
    # odd functional: the mirrored path gives exactly -value
    sample = np.concatenate([fine, -fine])
    mean = math.fsum(sample) / sample.size
    sq = fine * fine
    variance = math.fsum(sq) / fine.size
    variance_se = float(np.std(sq, ddof=1) / math.sqrt(fine.size))
    disc = abs(variance - math.fsum(coarse * coarse) / coarse.size)
    ks = stats.kstest(fine, "norm", args=(0.0, math.sqrt(variance))).statistic
    return CltReport(
        t=t,
        eps_ladder=ladder,
        variance_ratios=ratios,
        variance_ratio_errors=ratio_errs,
        first_chaos_ratios=chaos_ratios,
        region_shares=shares,
        sigma_sq_target=sigma_squared(t),
        mc_eps=mc_eps,
        mc_mean=mean,
        mc_variance=variance,
        mc_variance_se=variance_se,
        mc_discretization_tol=disc,
        mc_skewness=float(stats.skew(fine)),
        mc_kurtosis_excess=float(stats.kurtosis(fine)),
        ks_statistic=float(ks),
        ks_critical_1pct=float(stats.kstwo.ppf(0.99, fine.size)),
        n_paths=n_paths,
        n_steps=n_steps,
        seed=seed,
        statistics=sample,
    )
