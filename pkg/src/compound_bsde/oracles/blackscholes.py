"""Black-Scholes prices and deltas with continuous dividend yield."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .normal import norm_cdf


def bs_price_delta(kind: str, t, x, K, T, r: float, q: float, sigma: float):
    """``(price, delta)`` of a European call or put; arrays broadcast.

    At ``t == T`` the intrinsic value is returned, with right-derivative
    deltas (call ``1{x > K}``, put ``-1{x < K}``).
    """
    if kind not in ("call", "put"):
        raise ValidationError(f"kind must be 'call' or 'put', got {kind!r}")
    x = np.asarray(x, dtype=float)
    K = np.asarray(K, dtype=float)
    tau = np.asarray(T, dtype=float) - np.asarray(t, dtype=float)
    if np.any(tau < 0):
        raise ValidationError("valuation time after maturity")
    if np.any(x <= 0) or not sigma > 0:
        raise ValidationError("need x > 0 and sigma > 0")
    live = tau > 0
    safe_tau = np.where(live, tau, 1.0)
    sd = sigma * np.sqrt(safe_tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(x / K) + (r - q + 0.5 * sigma * sigma) * safe_tau) / sd
    d2 = d1 - sd
    dq = np.exp(-q * safe_tau)
    dr = np.exp(-r * safe_tau)
    if kind == "call":
        price = x * dq * norm_cdf(d1) - K * dr * norm_cdf(d2)
        delta = dq * norm_cdf(d1)
        intrinsic, kink = np.maximum(x - K, 0.0), (x > K).astype(float)
    else:
        price = K * dr * norm_cdf(-d2) - x * dq * norm_cdf(-d1)
        delta = -dq * norm_cdf(-d1)
        intrinsic, kink = np.maximum(K - x, 0.0), -(x < K).astype(float)
    price = np.where(live, price, intrinsic)
    delta = np.where(live, delta, kink)
    if price.ndim == 0:
        return float(price), float(delta)
    return price, delta
