"""Fast oracle self-test behind ``compound-bsde check``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .oracles.bermudan import binomial_bermudan_put, per_asset_delta, reduce_geobasket, TreeConfig
from .oracles.blackscholes import bs_price_delta
from .oracles.compound import geske_quote, mfold_critical_levels, mfold_quote, _chain_price, MFOLD_CDF
from .oracles.normal import NormalCdfConfig, binorm_cdf, mvn_cdf, norm_cdf
from .sde import GbmModel

PLAIN = dict(K1=1.0, K2=14.0, T1=0.2, T2=0.4, r=0.03, q=0.0, sigma=0.2)
PLAIN_REF = {("call", "call"): (0.224, 0.291), ("call", "put"): (0.120, -0.168),
             ("put", "call"): (0.430, -0.272), ("put", "put"): (0.492, 0.269)}
MFOLD_REF = {2: (3.088, 1.000), 3: (2.174, 0.998), 4: (1.315, 0.942), 5: (0.640, 0.707)}
BERMUDAN_REF = {1: (3.071, -0.510), 5: (1.745, -0.121), 20: (1.223, -0.036)}
BERMUDAN_DATES = [0.1, 0.2, 0.3, 0.4, 0.5]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(name, fn) -> Check:
    start = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # a crashing check is a failed check
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return Check(name, bool(passed), detail, time.perf_counter() - start)


def check_geske():
    worst = 0.0
    for (o, i), (p_ref, d_ref) in PLAIN_REF.items():
        q = geske_quote(o, i, 0.0, 14.0, **PLAIN)
        worst = max(worst, abs(q.price - p_ref), abs(q.delta - d_ref))
    return worst <= 1e-3, f"max abs gap {worst:.2e} (tol 1e-3)"


def check_mfold():
    worst = 0.0
    for M, (p_ref, d_ref) in MFOLD_REF.items():
        q = mfold_quote(0.0, 5.0, [1.0] * M, [float(j + 1) for j in range(M)], 0.03, 0.0, 0.2)
        worst = max(worst, abs(q.price - p_ref), abs(q.delta - d_ref))
    return worst <= 2e-3, f"max abs gap {worst:.2e} (tol 2e-3)"


def check_bermudan():
    worst_p = worst_d = 0.0
    for d, (p_ref, d_ref) in BERMUDAN_REF.items():
        model = GbmModel.isotropic(d, 0.02, 0.0, 0.2, 49.0)
        red = reduce_geobasket(model)
        price, dh = binomial_bermudan_put(red, 50.0, BERMUDAN_DATES)
        worst_p = max(worst_p, abs(price - p_ref))
        worst_d = max(worst_d, float(np.max(np.abs(per_asset_delta(dh, red, model.x0) - d_ref))))
    return worst_p <= 5e-3 and worst_d <= 2e-3, f"price gap {worst_p:.2e} (tol 5e-3), delta gap {worst_d:.2e} (tol 2e-3)"


def check_parity():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        x, K = rng.uniform(5, 50, 2)
        T = rng.uniform(0.05, 3)
        r, q, s = rng.uniform(-0.02, 0.08), rng.uniform(0, 0.05), rng.uniform(0.05, 0.6)
        c = bs_price_delta("call", 0.0, x, K, T, r, q, s)[0]
        p = bs_price_delta("put", 0.0, x, K, T, r, q, s)[0]
        worst = max(worst, abs(c - p - (x * math.exp(-q * T) - K * math.exp(-r * T))))
    return worst <= 1e-10, f"max parity gap {worst:.1e} (tol 1e-10)"


def check_geske_collapse():
    q = geske_quote("call", "call", 0.0, 14.0, 0.0, 14.0, 0.2, 0.4, 0.03, 0.0, 0.2)
    bs = bs_price_delta("call", 0.0, 14.0, 14.0, 0.4, 0.03, 0.0, 0.2)[0]
    return abs(q.price - bs) <= 1e-8, f"gap {abs(q.price - bs):.1e} (tol 1e-8)"


def check_mfold_collapse():
    q = mfold_quote(0.0, 5.0, [1.0], [1.0], 0.03, 0.0, 0.2)
    bs = bs_price_delta("call", 0.0, 5.0, 1.0, 1.0, 0.03, 0.0, 0.2)[0]
    return abs(q.price - bs) <= 1e-8, f"gap {abs(q.price - bs):.1e} (tol 1e-8)"


def check_mvn_vs_binorm():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        a, b = rng.normal(0, 1.5, 2)
        rho = rng.uniform(-0.95, 0.95)
        corr = np.array([[1.0, rho], [rho, 1.0]])
        # embed in three dimensions with a free third coordinate so the quasi-Monte Carlo path runs
        corr3 = np.eye(3)
        corr3[:2, :2] = corr
        est = mvn_cdf(np.array([a, b, np.inf]), corr3, NormalCdfConfig(max_points=2 ** 20))
        worst = max(worst, abs(est - binorm_cdf(a, b, rho)))
    return worst <= 1e-6, f"max gap {worst:.1e} (tol 1e-6)"


def check_kstar_residual():
    strikes, times = [1.0] * 5, [1.0, 2.0, 3.0, 4.0, 5.0]
    ks = mfold_critical_levels(strikes, times, 0.03, 0.0, 0.2)
    worst = 0.0
    for j in range(4):
        v = _chain_price(times[j], np.array([ks[j]]), times[j + 1:], strikes[j + 1:], ks[j + 1:],
                         0.03, 0.0, 0.2, MFOLD_CDF)[0]
        worst = max(worst, abs(v - strikes[j]) / strikes[j])
    return worst <= 1e-8, f"max relative residual {worst:.1e} (tol 1e-8)"


def check_dominance_and_european_tree():
    red = reduce_geobasket(GbmModel.isotropic(5, 0.02, 0.0, 0.2, 49.0))
    berm = binomial_bermudan_put(red, 50.0, BERMUDAN_DATES)[0]
    euro_tree = binomial_bermudan_put(red, 50.0, [0.5], TreeConfig(steps=10_000))[0]
    euro = bs_price_delta("put", 0.0, red.x0, 50.0, 0.5, red.r, red.q, red.sigma)[0]
    rel = abs(euro_tree - euro) / euro
    return berm >= euro - 1e-10 and rel <= 2e-3, f"bermudan {berm:.4f} >= european {euro:.4f}; tree rel gap {rel:.1e}"


def check_norm_cdf():
    return abs(norm_cdf(1.0) - 0.8413447460685429) <= 1e-15 and norm_cdf(0.0) == 0.5, "Phi(0), Phi(1)"


CHECKS = [
    ("geske table reference", check_geske),
    ("m-fold table reference", check_mfold),
    ("bermudan tree table reference", check_bermudan),
    ("put-call parity", check_parity),
    ("geske K1=0 collapse", check_geske_collapse),
    ("m-fold M=1 collapse", check_mfold_collapse),
    ("mvn vs bivariate", check_mvn_vs_binorm),
    ("critical level residual", check_kstar_residual),
    ("bermudan dominance and european tree", check_dominance_and_european_tree),
    ("normal cdf", check_norm_cdf),
]


def run_checks() -> list[Check]:
    return [_timed(name, fn) for name, fn in CHECKS]
