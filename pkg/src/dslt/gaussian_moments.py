"""Exact bivariate Gaussian integrals and covariance data of two fBm increments.

``pair_integral_exact`` evaluates

    int_{R^2} x^m y^n exp(-(lam x^2 + rho y^2 + 2 mu x y) / 2) dx dy

as ``2 pi / sqrt(det)`` times a mixed Gaussian moment, the moment coming from
an Isserlis (Wick) recursion whose coefficient tables are memoized.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .config import DomainError, check_hurst

__all__ = [
    "CovTriple",
    "Region",
    "GapCoords",
    "DegenerateError",
    "cov_triple",
    "wick_coefficients",
    "mixed_moment",
    "pair_integral_exact",
    "lemma_bound",
    "region_lower_bound",
    "gap_times",
    "region_covariances",
    "sample_lemma_ratios",
    "sample_region_ratios",
]


class DegenerateError(ValueError):
    """The quadratic form lam*rho - mu^2 is not positive."""


@dataclass(frozen=True)
class CovTriple:
    """Variances (lam, rho) and covariance mu of B_s - B_r and B_{s'} - B_{r'}."""

    lam: float
    rho: float
    mu: float

    @property
    def det(self) -> float:
        return self.lam * self.rho - self.mu**2


class Region(str, Enum):
    """Interleavings of two intervals [r, s] and [r', s'] with r < r'."""

    D1 = "D1"  # r < r' < s < s'  (overlapping)
    D2 = "D2"  # r < r' < s' < s  (nested)
    D3 = "D3"  # r < s < r' < s'  (disjoint)


@dataclass(frozen=True)
class GapCoords:
    """Consecutive gaps (a, b, c) between the four ordered time points of a region."""

    case_id: Region
    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "case_id", Region(self.case_id))
        if min(self.a, self.b, self.c) < 0:
            raise DomainError("gaps must be nonnegative")


def cov_triple(r: float, s: float, rp: float, sp: float, H: float) -> CovTriple:
    """(lam, rho, mu) for the increments over [r, s] and [rp, sp]."""
    H = check_hurst(H)
    if not (r < s and rp < sp):
        raise DomainError(f"need r < s and rp < sp, got ({r}, {s}, {rp}, {sp})")
    h2 = 2.0 * H
    lam = abs(s - r) ** h2
    rho = abs(sp - rp) ** h2
    mu = 0.5 * (abs(sp - r) ** h2 + abs(s - rp) ** h2 - abs(sp - s) ** h2 - abs(r - rp) ** h2)
    return CovTriple(lam, rho, mu)


_wick_lock = threading.Lock()


@lru_cache(maxsize=None)
def _wick_table(m: int, n: int) -> tuple[tuple[int, int, int, int], ...]:
    # E[X^m Y^n] = sum coef * sxx^i * syy^j * sxy^l, stored as (i, j, l, coef)
    if m == 0 and n == 0:
        return ((0, 0, 0, 1),)
    if m == 0:
        return tuple((j, i, l, c) for i, j, l, c in _wick_table(n, 0))
    acc: dict[tuple[int, int, int], int] = {}
    # Stein recursion on one factor of X:
    # E[X^m Y^n] = (m-1) sxx E[X^{m-2} Y^n] + n sxy E[X^{m-1} Y^{n-1}]
    if m >= 2:
        for i, j, l, c in _wick_table(m - 2, n):
            key = (i + 1, j, l)
            acc[key] = acc.get(key, 0) + (m - 1) * c
    if n >= 1:
        for i, j, l, c in _wick_table(m - 1, n - 1):
            key = (i, j, l + 1)
            acc[key] = acc.get(key, 0) + n * c
    return tuple((i, j, l, c) for (i, j, l), c in sorted(acc.items()) if c)


def wick_coefficients(m: int, n: int) -> tuple[tuple[int, int, int, int], ...]:
    """Monomial expansion of E[X^m Y^n] in (sxx, syy, sxy) for a centered pair."""
    if m < 0 or n < 0:
        raise ValueError("moment orders must be nonnegative")
    with _wick_lock:
        return _wick_table(m, n)


def mixed_moment(m: int, n: int, sxx, syy, sxy):
    """E[X^m Y^n] for a centered Gaussian pair with the given covariance entries."""
    sxx, syy, sxy = (np.asarray(v, dtype=float) for v in (sxx, syy, sxy))
    out = np.zeros(np.broadcast(sxx, syy, sxy).shape)
    for i, j, l, c in wick_coefficients(m, n):
        out = out + c * sxx**i * syy**j * sxy**l
    return out


def pair_integral_exact(m: int, lam, rho, mu, n: int | None = None, det=None):
    """Exact value of int x^m y^n exp(-(lam x^2 + rho y^2 + 2 mu x y)/2) dx dy.

    ``n`` defaults to ``m``. Vectorized over ``lam, rho, mu``. Callers that
    know ``lam*rho - mu^2`` more accurately than the direct product can pass
    it as ``det``.
    """
    n = m if n is None else n
    lam, rho, mu = (np.asarray(v, dtype=float) for v in (lam, rho, mu))
    det = lam * rho - mu * mu if det is None else np.asarray(det, dtype=float)
    if np.any(lam <= 0) or np.any(rho <= 0) or np.any(det <= 0):
        raise DegenerateError("pair integral needs lam > 0, rho > 0, lam*rho - mu^2 > 0")
    # the integrand is a Gaussian with covariance inv([[lam, mu], [mu, rho]])
    val = 2.0 * np.pi / np.sqrt(det) * mixed_moment(m, n, rho / det, lam / det, -mu / det)
    return float(val) if val.ndim == 0 else val


def lemma_bound(m: int, lam: float, rho: float, mu: float):
    """Right-hand side of the pair-integral bound with unit constant.

    Large-correlation branch (mu^2/det >= 1): |mu|^m / det^{m + 1/2}.
    Otherwise |mu| / det^{m/2 + 1} for odd m and det^{-(m+1)/2} for even m.
    """
    lam, rho, mu = (np.asarray(v, dtype=float) for v in (lam, rho, mu))
    det = lam * rho - mu * mu
    if np.any(det <= 0):
        raise DegenerateError("lemma bound needs lam*rho - mu^2 > 0")
    big = np.abs(mu) ** m / det ** (m + 0.5)
    if m % 2:
        small = np.abs(mu) / det ** (m / 2 + 1)
    else:
        small = det ** (-(m + 1) / 2)
    out = np.where(mu * mu / det >= 1.0, big, small)
    return float(out) if out.ndim == 0 else out


def region_lower_bound(gaps: GapCoords, H: float) -> float:
    """Lower-bound shape for lam*rho - mu^2 on each region (unit constant)."""
    h2 = 2.0 * check_hurst(H)
    a, b, c = gaps.a, gaps.b, gaps.c
    if gaps.case_id is Region.D1:
        return (a + b) ** h2 * c**h2 + a**h2 * (b + c) ** h2
    if gaps.case_id is Region.D2:
        return b**h2 * (a**h2 + c**h2)
    return (a * c) ** h2


def gap_times(gaps: GapCoords, base: float = 0.0) -> tuple[float, float, float, float]:
    """(r, s, r', s') of a gap configuration starting at ``base``."""
    a, b, c = gaps.a, gaps.b, gaps.c
    r = base
    if gaps.case_id is Region.D1:
        return r, r + a + b, r + a, r + a + b + c
    if gaps.case_id is Region.D2:
        return r, r + a + b + c, r + a, r + a + b
    return r, r + a, r + a + b, r + a + b + c


_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _disjoint_mu(a, b, c, H: float):
    """Covariance of increments over [0, a] and [a+b, a+b+c].

    The four-term formula cancels catastrophically when a, c << b; there the
    representation H(2H-1) a c int int (b + a u + c v)^{2H-2} du dv is used.
    """
    h2 = 2.0 * H
    direct = 0.5 * ((a + b + c) ** h2 + b**h2 - (a + b) ** h2 - (b + c) ** h2)
    far = (a + c) < 0.25 * b
    if not np.any(far):
        return direct
    af, bf, cf = (np.broadcast_to(v, direct.shape)[far] for v in (a, b, c))
    acc = np.zeros_like(af)
    for u, wu in zip(_GL_X, _GL_W):
        for v, wv in zip(_GL_X, _GL_W):
            acc += wu * wv * (bf + af * u + cf * v) ** (h2 - 2.0)
    out = np.array(direct, copy=True)
    out[far] = H * (h2 - 1.0) * af * cf * acc
    return out


def region_covariances(region: Region | str, a, b, c, H: float):
    """Vectorized (lam, rho, mu) in gap coordinates of ``region``."""
    region = Region(region)
    h2 = 2.0 * H
    a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c)))
    if region is Region.D1:
        lam = (a + b) ** h2
        rho = (b + c) ** h2
        mu = 0.5 * ((a + b + c) ** h2 + b**h2 - a**h2 - c**h2)
    elif region is Region.D2:
        lam = (a + b + c) ** h2
        rho = b**h2
        mu = 0.5 * ((a + b) ** h2 + (b + c) ** h2 - a**h2 - c**h2)
    else:
        lam = a**h2
        rho = c**h2
        mu = _disjoint_mu(a, b, c, H)
    return lam, rho, mu



def sample_lemma_ratios(m: int, n_draws: int, seed: int, lo: float = 0.1, hi: float = 10.0, min_det: float = 0.01):
    """Random (lam, rho, mu) in [lo, hi]^3 with lam*rho - mu^2 > min_det.

    Returns the parameter draws (n, 3), |pair_integral_exact|, the bound and
    their ratio. Draws are rejection-sampled from one seeded stream.
    """
    rng = np.random.default_rng(seed)
    kept = np.empty((0, 3))
    while kept.shape[0] < n_draws:
        cand = rng.uniform(lo, hi, size=(2 * n_draws, 3))
        ok = cand[:, 0] * cand[:, 1] - cand[:, 2] ** 2 > min_det
        kept = np.concatenate([kept, cand[ok]])
    pts = kept[:n_draws]
    lam, rho, mu = pts.T
    exact = np.abs(pair_integral_exact(m, lam, rho, mu))
    bound = lemma_bound(m, lam, rho, mu)
    return pts, exact, bound, exact / bound


def sample_region_ratios(region: Region | str, H: float, n_draws: int, seed: int, t: float = 1.0):
    """(lam*rho - mu^2) / region_lower_bound at uniform gap triples in (0, t]^3.

    Returns the gaps (n, 3), the determinant, the lower bound and the ratio.
    """
    region = Region(region)
    H = check_hurst(H)
    rng = np.random.default_rng(seed)
    # 1 - U lies in (0, 1], so no gap is exactly zero
    gaps = t * (1.0 - rng.uniform(size=(n_draws, 3)))
    a, b, c = gaps.T
    lam, rho, mu = region_covariances(region, a, b, c, H)
    det = lam * rho - mu * mu
    h2 = 2.0 * H
    if region is Region.D1:
        lower = (a + b) ** h2 * c**h2 + a**h2 * (b + c) ** h2
    elif region is Region.D2:
        lower = b**h2 * (a**h2 + c**h2)
    else:
        lower = (a * c) ** h2
    return gaps, det, lower, det / lower
