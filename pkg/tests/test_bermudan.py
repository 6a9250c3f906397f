import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compound_bsde import _accel
from compound_bsde.errors import DateMappingCollision, NonDiagonalSigma, ValidationError
from compound_bsde.oracles.bermudan import (TreeConfig, binomial_bermudan_put, exercise_layers,
                                            per_asset_delta, reduce_geobasket)
from compound_bsde.oracles.blackscholes import bs_price_delta
from compound_bsde.sde import GbmModel, brownian_increments, exact_paths
from compound_bsde.grid import build_grid

DATES = [0.1, 0.2, 0.3, 0.4, 0.5]
# reference column of the Bermudan basket table: price, per-asset delta
TABLE = {1: (3.071, -0.510), 5: (1.745, -0.121), 20: (1.223, -0.036)}


def _model(d, corr=None):
    return GbmModel.isotropic(d, 0.02, 0.0, 0.2, 49.0, corr=corr)


@pytest.mark.parametrize("d", sorted(TABLE))
def test_reference_table(d, backend):
    m = _model(d)
    red = reduce_geobasket(m)
    start = time.perf_counter()
    price, dh = binomial_bermudan_put(red, 50.0, DATES)
    assert time.perf_counter() - start < 10.0
    p_ref, d_ref = TABLE[d]
    assert abs(price - p_ref) <= 5e-3
    assert np.all(np.abs(per_asset_delta(dh, red, m.x0) - d_ref) <= 2e-3)


def test_reduction_parameters():
    red = reduce_geobasket(_model(4))
    assert red.sigma == pytest.approx(0.1)  # 0.2 / sqrt(4) for independent assets
    assert red.q == pytest.approx(0.5 * 0.04 - 0.5 * 0.01)
    assert red.x0 == pytest.approx(49.0)
    one = reduce_geobasket(_model(1))
    assert (one.sigma, one.q) == (pytest.approx(0.2), pytest.approx(0.0))
    with pytest.raises(NonDiagonalSigma):
        reduce_geobasket(GbmModel(r=0.0, q=0.0, sigma=[[0.2, 0.1], [0.0, 0.2]], corr=None, x0=[1.0, 1.0]))


def test_reduction_matches_simulated_geomean():
    corr = np.full((3, 3), 0.4) + 0.6 * np.eye(3)
    m = GbmModel(r=0.02, q=[0.0, 0.01, 0.03], sigma=np.diag([0.1, 0.2, 0.3]), corr=corr, x0=[40.0, 50.0, 60.0])
    red = reduce_geobasket(m)
    g = build_grid(1.0, [1.0], 1)
    x = exact_paths(m, g, brownian_increments(m, g, 200_000, 0))[:, -1]
    lg = np.mean(np.log(x), axis=1)
    assert lg.mean() == pytest.approx(math.log(red.x0) + red.r - red.q - 0.5 * red.sigma ** 2, abs=3e-3)
    assert lg.std() == pytest.approx(red.sigma, rel=5e-3)


def test_european_tree_vs_black_scholes():
    red = reduce_geobasket(_model(5))
    tree = binomial_bermudan_put(red, 50.0, [0.5], TreeConfig(steps=10_000))
    bs = bs_price_delta("put", 0.0, red.x0, 50.0, 0.5, red.r, red.q, red.sigma)
    assert abs(tree[0] - bs[0]) / bs[0] <= 2e-3
    assert tree[1] == pytest.approx(bs[1], abs=2e-3)


def test_backends_agree():
    red = reduce_geobasket(_model(5))
    with _accel.use_backend("numba"):
        a = binomial_bermudan_put(red, 50.0, DATES, TreeConfig(steps=2000))
    with _accel.use_backend("numpy"):
        b = binomial_bermudan_put(red, 50.0, DATES, TreeConfig(steps=2000))
    assert a[0] == pytest.approx(b[0], rel=1e-12) and a[1] == pytest.approx(b[1], rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(30, 70), st.floats(30, 70), st.floats(0.0, 0.08), st.floats(0.1, 0.5),
       st.lists(st.floats(0.05, 1.0), min_size=1, max_size=4, unique=True))
def test_dominance_chain(x0, K, r, vol, dates):
    # European <= Bermudan <= Bermudan on a superset of dates; monotone in the strike
    red = reduce_geobasket(GbmModel.isotropic(1, r, 0.0, vol, x0))
    dates = sorted({round(t, 2) for t in dates})
    T = dates[-1]
    cfg = TreeConfig(steps=800)
    finer = sorted(set(dates) | {round(T / 2, 3)})
    try:
        berm = binomial_bermudan_put(red, K, dates, cfg)[0]
        more = binomial_bermudan_put(red, K, finer, cfg)[0]
    except DateMappingCollision:
        return
    euro = binomial_bermudan_put(red, K, [T], cfg)[0]
    assert euro <= berm + 1e-12 <= more + 2e-12
    assert binomial_bermudan_put(red, K + 1.0, dates, cfg)[0] >= berm


def test_exercise_layers_and_errors():
    assert exercise_layers(DATES, 0.5, 10).tolist() == [2, 4, 6, 8, 10]
    with pytest.raises(DateMappingCollision):
        exercise_layers([0.1, 0.11], 0.5, 10)
    with pytest.raises(ValidationError):
        exercise_layers([0.6], 0.5, 10)
    red = reduce_geobasket(_model(1))
    with pytest.raises(ValidationError):
        binomial_bermudan_put(red, -1.0, DATES)
    with pytest.raises(ValidationError):
        TreeConfig(steps=0)
