import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from compound_bsde.errors import CholeskyFailure, InvalidCorrelation, ShapeMismatch, ToleranceNotReached
from compound_bsde.oracles.normal import (NormalCdfConfig, binorm_cdf, mvn_cdf, mvn_cdf_batch, ndtri,
                                          norm_cdf, norm_pdf, prioritize)

mpmath.mp.dps = 40


def test_norm_cdf_against_mpmath():
    xs = np.random.default_rng(2024).uniform(-12.0, 9.0, 1000)
    got = norm_cdf(xs)
    ref = np.array([float(mpmath.ncdf(mpmath.mpf(float(x)))) for x in xs])
    assert np.max(np.abs(got - ref)) <= 1e-12
    # scalar path agrees with the array path
    assert all(norm_cdf(float(x)) == pytest.approx(g, rel=1e-14, abs=1e-300) for x, g in zip(xs[:50], got[:50]))


def test_norm_cdf_frozen_values():
    assert norm_cdf(0.0) == 0.5
    assert norm_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-16)
    assert norm_cdf(-1.96) == pytest.approx(0.024997895148220435, abs=1e-16)
    assert norm_cdf(-30.0) == pytest.approx(4.906713927148187e-198, rel=1e-12)
    assert norm_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_ndtri_inverts():
    ps = np.concatenate([np.logspace(-300, -1, 200), np.linspace(0.01, 0.99, 200), 1 - np.logspace(-15, -2, 50)])
    got = np.array([ndtri(p) for p in ps])
    assert np.allclose(got, special.ndtri(ps), rtol=1e-13, atol=1e-13)


def test_binorm_frozen_and_limits():
    assert binorm_cdf(0.0, 0.0, 0.5) == pytest.approx(1 / 3, abs=1e-15)  # 1/4 + asin(rho)/(2 pi)
    assert binorm_cdf(0.0, 0.0, -0.5) == pytest.approx(1 / 6, abs=1e-15)
    assert binorm_cdf(1.0, -0.3, 0.0) == pytest.approx(norm_cdf(1.0) * norm_cdf(-0.3), abs=1e-15)
    assert binorm_cdf(0.4, 0.7, 1.0) == pytest.approx(norm_cdf(0.4), abs=1e-15)
    assert binorm_cdf(0.4, 0.7, -1.0) == pytest.approx(norm_cdf(0.4) + norm_cdf(0.7) - 1, abs=1e-15)
    assert binorm_cdf(np.inf, 0.3, 0.2) == pytest.approx(norm_cdf(0.3), abs=1e-15)
    with pytest.raises(InvalidCorrelation):
        binorm_cdf(0.0, 0.0, 1.2)


def test_binorm_against_scipy(backend):
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 2, (2, 300))
    rho = rng.uniform(-0.99, 0.99, 300)
    got = binorm_cdf(a, b, rho)
    ref = np.array([stats.multivariate_normal.cdf([x, y], cov=[[1, r], [r, 1]], abseps=1e-12, releps=1e-12)
                    for x, y, r in zip(a, b, rho)])
    assert np.max(np.abs(got - ref)) < 1e-9


@settings(max_examples=80, deadline=None)
@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-0.999, 0.999))
def test_binorm_frechet_bounds_and_symmetry(a, b, rho):
    p = binorm_cdf(a, b, rho)
    lo = max(0.0, norm_cdf(a) + norm_cdf(b) - 1)
    hi = min(norm_cdf(a), norm_cdf(b))
    assert lo - 1e-14 <= p <= hi + 1e-14
    assert p == pytest.approx(binorm_cdf(b, a, rho), abs=1e-14)
    # P(X<=a, Y<=b) + P(X<=a, Y>b) = P(X<=a)
    assert p + binorm_cdf(a, -b, -rho) == pytest.approx(norm_cdf(a), abs=1e-13)


def test_trivariate_orthant_closed_form(backend):
    r12, r13, r23 = 0.5, -0.2, 0.3
    corr = np.array([[1, r12, r13], [r12, 1, r23], [r13, r23, 1]])
    exact = 0.125 + (math.asin(r12) + math.asin(r13) + math.asin(r23)) / (4 * math.pi)
    assert mvn_cdf(np.zeros(3), corr, NormalCdfConfig(tol=1e-7, max_points=2 ** 20)) == pytest.approx(exact, abs=1e-6)


def test_mvn_against_scipy():
    rng = np.random.default_rng(5)
    for _ in range(5):
        m = 4
        a = rng.normal(size=(m, m))
        cov = a @ a.T + m * np.eye(m)
        s = np.sqrt(np.diag(cov))
        corr = cov / np.outer(s, s)
        u = rng.normal(0.5, 1.0, m)
        ref = stats.multivariate_normal.cdf(u, cov=corr, abseps=1e-7, releps=1e-7, maxpts=10 ** 6)
        assert mvn_cdf(u, corr, NormalCdfConfig(tol=1e-6, max_points=2 ** 20)) == pytest.approx(ref, abs=5e-6)


def test_mvn_low_dims_are_exact():
    c2 = np.array([[1.0, 0.3], [0.3, 1.0]])
    assert mvn_cdf([0.2, -0.1], c2) == binorm_cdf(0.2, -0.1, 0.3)
    assert mvn_cdf([0.2], np.eye(1)) == pytest.approx(norm_cdf(0.2))


def test_mvn_backends_agree():
    from compound_bsde import _accel

    corr = np.full((4, 4), 0.4) + 0.6 * np.eye(4)
    u = np.array([[0.1, 0.5, -0.3, 1.0], [1.0, 1.0, 1.0, 1.0]])
    cfg = NormalCdfConfig(fixed_points=2 ** 12)
    with _accel.use_backend("numba"):
        a = mvn_cdf_batch(u, corr, cfg)
    with _accel.use_backend("numpy"):
        b = mvn_cdf_batch(u, corr, cfg)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_mvn_errors():
    with pytest.raises(InvalidCorrelation):
        mvn_cdf(np.zeros(3), np.array([[1, 0.2, 0], [0.3, 1, 0], [0, 0, 1]]))
    with pytest.raises(CholeskyFailure):
        mvn_cdf(np.zeros(3), np.array([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]]))
    with pytest.raises(ShapeMismatch):
        mvn_cdf(np.zeros(4), np.eye(3))
    with pytest.raises(ShapeMismatch):
        mvn_cdf(np.zeros(11), np.eye(11))
    with pytest.raises(ToleranceNotReached):
        mvn_cdf(np.zeros(5), np.full((5, 5), 0.5) + 0.5 * np.eye(5), NormalCdfConfig(tol=1e-12, max_points=5000))


def test_prioritize_factor():
    corr = np.array([[1, 0.3, 0.1], [0.3, 1, -0.2], [0.1, -0.2, 1]])
    u = np.array([2.0, -1.0, 0.5])
    perm, L = prioritize(u, corr)
    assert perm[0] == 1  # tightest limit first
    assert np.allclose(L @ L.T, corr[np.ix_(perm, perm)])


def _corr_strategy(m):
    return st.lists(st.floats(-1, 1), min_size=m * m, max_size=m * m).map(
        lambda v: np.asarray(v).reshape(m, m)).filter(lambda a: np.linalg.cond(a @ a.T + 0.2 * np.eye(m)) < 50)


@settings(max_examples=15, deadline=None)
@given(_corr_strategy(3), st.lists(st.floats(-2.5, 2.5), min_size=3, max_size=3), st.integers(0, 2))
def test_mvn_sandwich_and_monotone(a, u, k):
    cov = a @ a.T + 0.2 * np.eye(3)
    s = np.sqrt(np.diag(cov))
    corr = cov / np.outer(s, s)
    cfg = NormalCdfConfig(fixed_points=2 ** 14, prioritize=False)
    u = np.asarray(u)
    p = mvn_cdf(u, corr, cfg)
    marg = norm_cdf(u)
    assert max(0.0, marg.sum() - 2) - 1e-4 <= p <= marg.min() + 1e-4
    # every two-dimensional margin bounds the joint probability
    for i, j in ((0, 1), (0, 2), (1, 2)):
        assert p <= binorm_cdf(u[i], u[j], corr[i, j]) + 1e-4
    v = u.copy()
    v[k] += 0.5
    assert mvn_cdf(v, corr, cfg) >= p - 1e-4
