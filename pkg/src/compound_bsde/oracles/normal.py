"""Univariate, bivariate and multivariate standard normal distribution functions.

The bivariate CDF follows Genz's refinement of the Drezner-Wesolowsky single
integral (20-point Gauss-Legendre everywhere).  The multivariate CDF uses
Genz's separation-of-variables transform integrated with independently
scrambled Sobol point sets; the spread of the replicates gives the error
estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import qmc

from .. import _accel
from .._accel import njit, prange
from ..errors import CholeskyFailure, InvalidCorrelation, ShapeMismatch, ToleranceNotReached

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def norm_cdf(x):
    """Standard normal CDF via ``erfc`` (accurate in both tails)."""
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / SQRT2) if np.ndim(x) else 0.5 * math.erfc(-x / SQRT2)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(TWO_PI)


@njit
def _phi(x):
    return 0.5 * math.erfc(-x / 1.4142135623730951)


@njit
def ndtri(p):
    """Inverse standard normal CDF (Wichura's AS241, ~1e-16 relative)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                   + 45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                   + 21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    if r <= 0.0:
        return -np.inf if q < 0 else np.inf
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
                   + 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
                   + 0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
                   + 0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r
                   + 7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                + 0.59983220655588793769) * r + 1.0)
    val = num / den
    return -val if q < 0 else val


# -- bivariate ---------------------------------------------------------------------

@njit
def _bvn_upper(dh, dk, r, gx, gw):
    """P(X > dh, Y > dk) for a standard bivariate normal with correlation r."""
    if dh == np.inf or dk == np.inf:
        return 0.0
    if dh == -np.inf:
        return 1.0 if dk == -np.inf else _phi(-dk)
    if dk == -np.inf:
        return _phi(-dh)
    if r == 0.0:
        return _phi(-dh) * _phi(-dk)
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    if abs(r) < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r)
        for i in range(gx.size):
            sn = math.sin(asr * (gx[i] + 1.0) / 2.0)
            bvn += gw[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / (2.0 * TWO_PI) + _phi(-h) * _phi(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if abs(r) < 1.0:
            as_ = (1.0 - r) * (1.0 + r)
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            bvn = a * math.exp(-(bs / as_ + hk) / 2.0) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0
                                                      + c * d * as_ * as_ / 5.0)
            if hk > -160.0:
                b = math.sqrt(bs)
                bvn -= (math.exp(-hk / 2.0) * math.sqrt(TWO_PI) * _phi(-b / a) * b
                        * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
            a = a / 2.0
            acc = 0.0
            for i in range(gx.size):
                xs = (a * (gx[i] + 1.0)) ** 2
                rs = math.sqrt(1.0 - xs)
                term = -math.exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs))
                if xs > 0.0:
                    term += math.exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs
                acc += a * gw[i] * term
            bvn = -(bvn + acc) / TWO_PI
        if r > 0.0:
            bvn += _phi(-max(h, k))
        else:
            bvn = -bvn
            if k > h:
                if h < 0.0:
                    bvn += _phi(k) - _phi(h)
                else:
                    bvn += _phi(-h) - _phi(-k)
    return max(0.0, min(1.0, bvn))


@njit(parallel=True)
def _binorm_batch_numba(a, b, rho, gx, gw, out):
    for i in prange(a.size):
        out[i] = _bvn_upper(-a[i], -b[i], rho[i], gx, gw)


def _binorm_batch_numpy(a, b, rho, gx, gw, out):
    out[:] = _bvn_upper_vec(-a, -b, rho)


def _bvn_upper_vec(h, k, r):
    """Vectorised twin of ``_bvn_upper``."""
    h, k, r = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float), np.asarray(r, float))
    h, k, r = h.ravel().copy(), k.ravel().copy(), r.ravel().copy()
    out = np.zeros(h.size)
    phi = special.ndtr
    with np.errstate(all="ignore"):
        inf_h, inf_k = np.isposinf(h), np.isposinf(k)
        ninf_h, ninf_k = np.isneginf(h), np.isneginf(k)
        done = inf_h | inf_k
        m = ~done & ninf_h
        out[m] = np.where(ninf_k[m], 1.0, phi(-k[m]))
        done |= m
        m = ~done & ninf_k
        out[m] = phi(-h[m])
        done |= m
        m = ~done & (r == 0)
        out[m] = phi(-h[m]) * phi(-k[m])
        done |= m

        lo = ~done & (np.abs(r) < 0.925)
        if lo.any():
            hh, kk, rr = h[lo], k[lo], r[lo]
            hs = (hh * hh + kk * kk) / 2.0
            asr = np.arcsin(rr)
            sn = np.sin(asr[:, None] * (_GL_X[None, :] + 1.0) / 2.0)
            s = np.sum(_GL_W * np.exp((sn * (hh * kk)[:, None] - hs[:, None]) / (1.0 - sn * sn)), axis=1)
            out[lo] = s * asr / (2.0 * TWO_PI) + phi(-hh) * phi(-kk)

        hi = ~done & ~lo
        if hi.any():
            hh, kk, rr = h[hi], k[hi], r[hi]
            kk = np.where(rr < 0, -kk, kk)
            hk = hh * kk
            bvn = np.zeros(hh.size)
            inner = np.abs(rr) < 1.0
            if inner.any():
                H, K, R, HK = hh[inner], kk[inner], rr[inner], hk[inner]
                as_ = (1.0 - R) * (1.0 + R)
                a = np.sqrt(as_)
                bs = (H - K) ** 2
                c = (4.0 - HK) / 8.0
                d = (12.0 - HK) / 16.0
                v = a * np.exp(-(bs / as_ + HK) / 2.0) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0
                                                         + c * d * as_ * as_ / 5.0)
                b = np.sqrt(bs)
                corr = (np.exp(-HK / 2.0) * math.sqrt(TWO_PI) * phi(-b / a) * b
                        * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0))
                v = v - np.where(HK > -160.0, corr, 0.0)
                a2 = a / 2.0
                xs = (a2[:, None] * (_GL_X[None, :] + 1.0)) ** 2
                rs = np.sqrt(1.0 - xs)
                term = -np.exp(-(bs[:, None] / xs + HK[:, None]) / 2.0) * (1.0 + c[:, None] * xs * (1.0 + d[:, None] * xs))
                term = term + np.where(xs > 0, np.exp(-bs[:, None] / (2.0 * xs) - HK[:, None] / (1.0 + rs)) / rs, 0.0)
                acc = np.sum(a2[:, None] * _GL_W * term, axis=1)
                bvn[inner] = -(v + acc) / TWO_PI
            pos = rr > 0
            res = np.where(pos, bvn + phi(-np.maximum(hh, kk)), -bvn)
            adj = np.where(hh < 0, phi(kk) - phi(hh), phi(-hh) - phi(-kk))
            res = np.where(~pos & (kk > hh), res + adj, res)
            out[hi] = res
    return np.clip(out, 0.0, 1.0)


_binorm_kernel = _accel.dispatch(_binorm_batch_numba, _binorm_batch_numpy)


def binorm_cdf(a, b, rho):
    """``P(X <= a, Y <= b)`` for standard normals with correlation ``rho`` (broadcasts)."""
    a_, b_, r_ = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(rho, float))
    if np.any(np.abs(r_) > 1.0) or np.any(np.isnan(r_)):
        raise InvalidCorrelation("bivariate correlation must lie in [-1, 1]")
    flat_a = np.ascontiguousarray(a_.ravel())
    out = np.empty(flat_a.size)
    _binorm_kernel(flat_a, np.ascontiguousarray(b_.ravel()), np.ascontiguousarray(r_.ravel()), _GL_X, _GL_W, out)
    if a_.ndim == 0:
        return float(out[0])
    return out.reshape(a_.shape)


# -- multivariate ------------------------------------------------------------------

@dataclass(frozen=True)
class NormalCdfConfig:
    tol: float = 1e-7
    max_points: int = 200_000
    seed: int = 0
    n_replicates: int = 6
    min_points: int = 1_000
    fixed_points: int | None = None  # total points; disables adaptivity when set
    prioritize: bool = True  # reorders per row, so the estimate is not smooth in ``upper``

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


MAX_DIM = 10


@njit(parallel=True)
def _genz_numba(upper, chol, pts, sums):
    """Add integrand sums over ``pts`` (``(n_rep, n, m-1)`` uniforms) into ``sums``.

    ``sums`` has shape ``(n_eval, n_rep)``; each cell is summed in point order
    so the result does not depend on the thread count.
    """
    n_eval, m = upper.shape
    n_rep, n = pts.shape[0], pts.shape[1]
    for cell in prange(n_eval * n_rep):
        e = cell // n_rep
        s = cell % n_rep
        y = np.empty(m)
        c = chol[e]
        e1 = _phi(upper[e, 0] / c[0, 0])
        total = 0.0
        for k in range(n):
            f = e1
            last = e1
            for i in range(1, m):
                p = pts[s, k, i - 1] * last
                if p < 1e-300:
                    p = 1e-300
                elif p > 1.0 - 1e-16:
                    p = 1.0 - 1e-16
                y[i - 1] = ndtri(p)
                acc = 0.0
                for l in range(i):
                    acc += c[i, l] * y[l]
                last = _phi((upper[e, i] - acc) / c[i, i])
                f *= last
                if f == 0.0:
                    break
            total += f
        sums[e, s] += total


def _genz_numpy(upper, chol, pts, sums):
    n_eval, m = upper.shape
    for e in range(n_eval):
        c = chol[e]
        for s in range(pts.shape[0]):
            w = pts[s]
            f = np.full(w.shape[0], special.ndtr(upper[e, 0] / c[0, 0]))
            last = f.copy()
            ys = []
            for i in range(1, m):
                p = np.clip(w[:, i - 1] * last, 1e-300, 1.0 - 1e-16)
                ys.append(special.ndtri(p))
                acc = sum(c[i, l] * ys[l] for l in range(i))
                with np.errstate(invalid="ignore"):
                    last = special.ndtr((upper[e, i] - acc) / c[i, i])
                last = np.where(f == 0.0, 0.0, last)
                f = f * last
            sums[e, s] += float(np.sum(f))


_genz_kernel = _accel.dispatch(_genz_numba, _genz_numpy)


def _check_corr(corr: np.ndarray) -> np.ndarray:
    corr = np.asarray(corr, dtype=float)
    m = corr.shape[0]
    if corr.shape != (m, m):
        raise ShapeMismatch("correlation must be square")
    if not np.allclose(corr, corr.T, atol=1e-12) or not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise InvalidCorrelation("correlation must be symmetric with unit diagonal")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure("correlation matrix is not positive definite") from exc


def prioritize(upper: np.ndarray, corr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Genz-Bretz variable ordering: integrate the most restrictive limits first.

    Returns the permutation and the Cholesky factor of the permuted matrix.
    The ordering only changes the variance of the estimate, not its mean.
    """
    m = upper.size
    u = np.where(np.isnan(upper), -np.inf, upper).astype(float)
    c = corr.copy()
    perm = np.arange(m)
    L = np.zeros((m, m))
    y = np.zeros(m)
    for i in range(m):
        best_p, best_j = np.inf, i
        for j in range(i, m):
            sd = math.sqrt(max(c[j, j] - L[j, :i] @ L[j, :i], 1e-300))
            p = _phi((u[j] - L[j, :i] @ y[:i]) / sd) if np.isfinite(u[j]) else (1.0 if u[j] > 0 else 0.0)
            if p < best_p:
                best_p, best_j = p, j
        j = best_j
        if j != i:
            for arr in (u, perm, L):
                arr[[i, j]] = arr[[j, i]]
            c[[i, j]] = c[[j, i]]
            c[:, [i, j]] = c[:, [j, i]]
        resid = c[i, i] - L[i, :i] @ L[i, :i]
        if resid <= 0.0:
            raise CholeskyFailure("correlation matrix is not positive definite")
        L[i, i] = math.sqrt(resid)
        for k in range(i + 1, m):
            L[k, i] = (c[k, i] - L[k, :i] @ L[i, :i]) / L[i, i]
        v = (u[i] - L[i, :i] @ y[:i]) / L[i, i]
        if np.isfinite(v):
            y[i] = -math.exp(-0.5 * v * v) / math.sqrt(TWO_PI) / max(_phi(v), 1e-300)
        else:
            y[i] = 0.0
    return perm, L


class _PointStream:
    """Independent Owen-scrambled Sobol streams, one per replicate."""

    def __init__(self, dim: int, n_rep: int, seed: int):
        seeds = np.random.SeedSequence(int(seed)).spawn(n_rep)
        self.engines = [qmc.Sobol(dim, scramble=True, seed=np.random.Generator(np.random.Philox(s)))
                        for s in seeds]

    def next(self, n: int) -> np.ndarray:
        return np.ascontiguousarray(np.stack([eng.random(n) for eng in self.engines]))


def _pow2(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


def mvn_cdf_batch(upper, corr, cfg: NormalCdfConfig = NormalCdfConfig(), return_error: bool = False):
    """``P(X <= upper_row)`` for each row of ``upper`` with a common correlation.

    Dimensions 1 and 2 are exact; higher dimensions integrate the Genz
    transform with scrambled Sobol points.  With ``cfg.fixed_points`` the point
    set is fixed (so the result is smooth in ``upper``); otherwise the points
    double until the largest standard error is below ``cfg.tol``.
    """
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    corr = np.atleast_2d(np.asarray(corr, dtype=float))
    m = corr.shape[0]
    if upper.shape[1] != m:
        raise ShapeMismatch(f"upper has {upper.shape[1]} columns, correlation is {m}x{m}")
    if m > MAX_DIM:
        raise ShapeMismatch(f"at most {MAX_DIM} dimensions are supported")
    if m == 1:
        vals = np.atleast_1d(norm_cdf(upper[:, 0]))
        return (vals, np.zeros_like(vals)) if return_error else vals
    if m == 2:
        vals = np.atleast_1d(binorm_cdf(upper[:, 0], upper[:, 1], corr[0, 1]))
        return (vals, np.zeros_like(vals)) if return_error else vals

    _check_corr(corr)
    upper_c = np.empty_like(upper)
    chols = np.empty((upper.shape[0], m, m))
    for row in range(upper.shape[0]):
        if cfg.prioritize:
            perm, chols[row] = prioritize(upper[row], corr)
        else:
            perm, chols[row] = np.arange(m), np.linalg.cholesky(corr)
        upper_c[row] = upper[row, perm]
    upper_c = np.where(np.isnan(upper_c), -np.inf, upper_c)
    stream = _PointStream(m - 1, cfg.n_replicates, cfg.seed)
    sums = np.zeros((upper.shape[0], cfg.n_replicates))
    if cfg.fixed_points:
        n = _pow2(max(1, int(cfg.fixed_points) // cfg.n_replicates))
        _genz_kernel(upper_c, chols, stream.next(n), sums)
        return _finish(sums / n, return_error)
    per_rep_max = max(1, cfg.max_points // cfg.n_replicates)
    done = 0
    batch = _pow2(max(1, cfg.min_points // cfg.n_replicates))
    while True:
        _genz_kernel(upper_c, chols, stream.next(batch), sums)
        done += batch
        means = sums / done
        err = means.std(axis=1, ddof=1) / math.sqrt(cfg.n_replicates)
        if np.all(err <= cfg.tol):
            break
        if 2 * done > per_rep_max:
            raise ToleranceNotReached(
                f"standard error {err.max():.2e} above {cfg.tol:.1e} after {done * cfg.n_replicates} points")
        batch = done
    return _finish(means, return_error)


def _finish(means, return_error):
    vals = np.clip(means.mean(axis=1), 0.0, 1.0)
    if return_error:
        return vals, means.std(axis=1, ddof=1) / math.sqrt(means.shape[1])
    return vals


def mvn_cdf(upper, corr, cfg: NormalCdfConfig = NormalCdfConfig()) -> float:
    """``P(X_1 <= u_1, ..., X_m <= u_m)`` for ``X ~ N(0, corr)``."""
    upper = np.asarray(upper, dtype=float)
    if upper.ndim != 1:
        raise ShapeMismatch("upper must be a vector; use mvn_cdf_batch for several rows")
    return float(mvn_cdf_batch(upper[None, :], corr, cfg)[0])
