"""Closed-form compound option prices: Geske's two-stage formulas and the M-fold call chain."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidTimes, RecursionDepth, ValidationError
from .blackscholes import bs_price_delta
from .normal import NormalCdfConfig, binorm_cdf, mvn_cdf_batch, norm_cdf
from .roots import brent_root, expanding_bracket

MAX_FOLD = 10
# fixed point set: the price is then a smooth function of x and of the critical levels
MFOLD_CDF = NormalCdfConfig(fixed_points=2 ** 15, prioritize=False)


@dataclass
class CompoundQuote:
    price: float | np.ndarray
    delta: float | np.ndarray
    critical_levels: list = field(default_factory=list)
    correlations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def conv(v):
            return v.tolist() if isinstance(v, np.ndarray) else v
        return {"price": conv(self.price), "delta": conv(self.delta),
                "critical_levels": [float(k) for k in self.critical_levels],
                "correlations": [np.asarray(c).tolist() for c in self.correlations]}


def _check_kind(name, kind):
    if kind not in ("call", "put"):
        raise ValidationError(f"{name} must be 'call' or 'put', got {kind!r}")


def geske_critical_level(inner: str, K1: float, K2: float, T1: float, T2: float,
                         r: float, q: float, sigma: float) -> float:
    """Underlying level at ``T1`` where the inner option is worth exactly ``K1``.

    Returns 0 or ``inf`` when the outer option is exercised always or never.
    """
    if K1 == 0.0:
        return 0.0 if inner == "call" else math.inf
    if inner == "put" and K1 >= K2 * math.exp(-r * (T2 - T1)):
        return 0.0  # put value never reaches K1

    def f(s):
        return bs_price_delta(inner, T1, s, K2, T2, r, q, sigma)[0] - K1

    lo_min, hi_max = 1e-8 * K2, 1e3 * K2
    # K1 below the inner value across the whole search range: treat as K1 = 0
    if inner == "call" and f(lo_min) >= 0:
        return 0.0
    if inner == "put" and f(hi_max) >= 0:
        return math.inf
    lo, hi = expanding_bracket(f, 0.5 * K2, 2.0 * K2, lo_min, hi_max)
    return brent_root(f, lo, hi, tol=1e-13 * K2)


def geske_quote(outer: str, inner: str, t, x, K1: float, K2: float, T1: float, T2: float,
                r: float, q: float, sigma: float) -> CompoundQuote:
    """Price and delta of an ``outer`` option (strike ``K1``, expiry ``T1``) on an
    ``inner`` vanilla (strike ``K2``, expiry ``T2``).  ``x`` may be an array."""
    _check_kind("outer", outer)
    _check_kind("inner", inner)
    if not t < T1 < T2:
        raise InvalidTimes(f"need t < T1 < T2, got {t}, {T1}, {T2}")
    if K1 < 0 or K2 <= 0 or not sigma > 0:
        raise ValidationError("need K1 >= 0, K2 > 0, sigma > 0")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValidationError("x must be positive")
    kstar = geske_critical_level(inner, K1, K2, T1, T2, r, q, sigma)
    tau1, tau2 = T1 - t, T2 - t
    rho = math.sqrt(tau1 / tau2)
    s1, s2 = sigma * math.sqrt(tau1), sigma * math.sqrt(tau2)
    with np.errstate(divide="ignore"):
        a1 = (np.log(x / kstar) + (r - q + 0.5 * sigma ** 2) * tau1) / s1
    a2 = a1 - s1
    b1 = (np.log(x / K2) + (r - q + 0.5 * sigma ** 2) * tau2) / s2
    b2 = b1 - s2
    xq = x * math.exp(-q * tau2)
    dq = math.exp(-q * tau2)
    k2r = K2 * math.exp(-r * tau2)
    k1r = K1 * math.exp(-r * tau1)
    P = binorm_cdf
    if outer == "call" and inner == "call":
        price = xq * P(a1, b1, rho) - k2r * P(a2, b2, rho) - k1r * norm_cdf(a2)
        delta = dq * P(a1, b1, rho)
    elif outer == "call":
        price = k2r * P(-a2, -b2, rho) - xq * P(-a1, -b1, rho) - k1r * norm_cdf(-a2)
        delta = -dq * P(-a1, -b1, rho)
    elif inner == "call":
        price = k2r * P(-a2, b2, -rho) - xq * P(-a1, b1, -rho) + k1r * norm_cdf(-a2)
        delta = -dq * P(-a1, b1, -rho)
    else:
        price = xq * P(a1, -b1, -rho) - k2r * P(a2, -b2, -rho) + k1r * norm_cdf(a2)
        delta = dq * P(a1, -b1, -rho)
    corr = np.array([[1.0, rho], [rho, 1.0]])
    if np.ndim(price) == 0:
        price, delta = float(price), float(delta)
    return CompoundQuote(price, delta, [kstar], [corr])


# -- M-fold call chain ---------------------------------------------------------------

def _time_corr(taus: np.ndarray) -> np.ndarray:
    lo = np.minimum.outer(taus, taus)
    hi = np.maximum.outer(taus, taus)
    return np.sqrt(lo / hi)


def _chain_price(t: float, x: np.ndarray, times, strikes, kstars, r, q, sigma,
                 cfg: NormalCdfConfig) -> np.ndarray:
    """Value at ``t < times[0]`` of the call chain with known critical levels."""
    taus = np.asarray(times, dtype=float) - t
    m = taus.size
    sd = sigma * np.sqrt(taus)
    with np.errstate(divide="ignore"):
        b = (np.log(x[:, None] / np.asarray(kstars)[None, :]) + (r - q - 0.5 * sigma ** 2) * taus) / sd
    a = b + sd
    P = _time_corr(taus)
    price = x * math.exp(-q * taus[-1]) * mvn_cdf_batch(a, P, cfg)
    for j in range(m):
        price = price - strikes[j] * math.exp(-r * taus[j]) * mvn_cdf_batch(b[:, : j + 1], P[: j + 1, : j + 1], cfg)
    return price


def mfold_critical_levels(strikes, times, r, q, sigma, cfg: NormalCdfConfig = MFOLD_CDF) -> list[float]:
    """``K_j*``: the level at ``T_j`` where the remaining chain is worth ``K_j``."""
    m = len(strikes)
    kstars = [0.0] * m
    kstars[-1] = float(strikes[-1])
    for j in range(m - 2, -1, -1):
        sub = (times[j + 1:], strikes[j + 1:], kstars[j + 1:])
        Kj = float(strikes[j])

        def f(s, sub=sub, Kj=Kj, tj=times[j]):
            return float(_chain_price(tj, np.array([s]), *sub, r, q, sigma, cfg)[0]) - Kj

        ref = max(Kj, float(strikes[-1]))
        lo, hi = expanding_bracket(f, 0.5 * ref, 4.0 * ref, 1e-8 * ref, 1e3 * ref)
        kstars[j] = brent_root(f, lo, hi, tol=1e-13 * ref)
    return kstars


def mfold_quote(t: float, x, strikes, times, r: float, q: float, sigma: float,
                cfg: NormalCdfConfig = MFOLD_CDF, kstars=None) -> CompoundQuote:
    """M-fold compound call (call on call on ... on a vanilla call).

    The delta is a central difference in ``x`` with step ``1e-4 x``; the
    critical levels do not depend on ``x`` so only the CDF limits move.
    """
    strikes = [float(k) for k in strikes]
    times = [float(s) for s in times]
    m = len(strikes)
    if m < 1 or len(times) != m:
        raise ValidationError("need one strike per exercise time and M >= 1")
    if m > MAX_FOLD:
        raise RecursionDepth(f"M = {m} exceeds the supported depth {MAX_FOLD}")
    if not all(b > a for a, b in zip([t] + times[:-1], times)):
        raise InvalidTimes("need t < T_1 < ... < T_M")
    if any(k <= 0 for k in strikes) or not sigma > 0:
        raise ValidationError("need positive strikes and sigma > 0")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xa <= 0):
        raise ValidationError("x must be positive")
    if kstars is None:
        kstars = mfold_critical_levels(strikes, times, r, q, sigma, cfg)
    price = _chain_price(t, xa, times, strikes, kstars, r, q, sigma, cfg)
    step = 1e-4 * xa
    up = _chain_price(t, xa + step, times, strikes, kstars, r, q, sigma, cfg)
    dn = _chain_price(t, xa - step, times, strikes, kstars, r, q, sigma, cfg)
    delta = (up - dn) / (2.0 * step)
    taus = np.asarray(times) - t
    corrs = [_time_corr(taus[: j + 1]) for j in range(m)]
    if np.ndim(x) == 0:
        return CompoundQuote(float(price[0]), float(delta[0]), list(kstars), corrs)
    return CompoundQuote(price, delta, list(kstars), corrs)


def mfold_envelope_delta(t: float, x: float, times, kstars, r, q, sigma,
                         cfg: NormalCdfConfig = MFOLD_CDF) -> float:
    """Analytic delta ``e^{-q tau_M} Phi_M(a)``, used to cross-check the difference quotient."""
    taus = np.asarray(times, dtype=float) - t
    sd = sigma * np.sqrt(taus)
    a = (np.log(x / np.asarray(kstars)) + (r - q + 0.5 * sigma ** 2) * taus) / sd
    return float(math.exp(-q * taus[-1]) * mvn_cdf_batch(a[None, :], _time_corr(taus), cfg)[0])
