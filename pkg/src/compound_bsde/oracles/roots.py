"""Brent's bracketing root finder (inverse quadratic interpolation with bisection fallback)."""

from __future__ import annotations

import math
from typing import Callable

from ..errors import MaxIterations, NoSignChange

_EPS = 2.220446049250313e-16


def brent_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
               max_iter: int = 200) -> float:
    """Root of ``f`` in ``[lo, hi]``; needs ``f(lo) * f(hi) <= 0``.

    Stops when ``f`` vanishes or the bracket is narrower than ``tol``
    (plus a few ulps of the iterate).
    """
    xpre, xcur = float(lo), float(hi)
    fpre, fcur = float(f(xpre)), float(f(xcur))
    if math.isnan(fpre) or math.isnan(fcur):
        raise NoSignChange("f is NaN at a bracket end")
    if fpre == 0.0:
        return xpre
    if fcur == 0.0:
        return xcur
    if (fpre > 0) == (fcur > 0):
        raise NoSignChange(f"f({lo:g})={fpre:g} and f({hi:g})={fcur:g} have the same sign")
    xblk = fblk = spre = scur = 0.0
    for _ in range(max_iter):
        if fpre != 0.0 and fcur != 0.0 and (fpre > 0) != (fcur > 0):
            xblk, fblk = xpre, fpre
            spre = scur = xcur - xpre
        if abs(fblk) < abs(fcur):
            xpre, xcur, xblk = xcur, xblk, xcur
            fpre, fcur, fblk = fcur, fblk, fcur
        delta = (tol + 4.0 * _EPS * abs(xcur)) / 2.0
        sbis = (xblk - xcur) / 2.0
        if fcur == 0.0 or abs(sbis) < delta:
            return xcur
        if abs(spre) > delta and abs(fcur) < abs(fpre):
            if xpre == xblk:
                stry = -fcur * (xcur - xpre) / (fcur - fpre)
            else:
                dpre = (fpre - fcur) / (xpre - xcur)
                dblk = (fblk - fcur) / (xblk - xcur)
                den = dblk * dpre * (fblk - fpre)
                # flat stretches (e.g. an underflowed option value) make the fit degenerate
                stry = -fcur * (fblk * dblk - fpre * dpre) / den if den != 0.0 else math.inf
            if 2.0 * abs(stry) < min(abs(spre), 3.0 * abs(sbis) - delta):
                spre, scur = scur, stry
            else:
                spre = scur = sbis
        else:
            spre = scur = sbis
        xpre, fpre = xcur, fcur
        xcur += scur if abs(scur) > delta else (delta if sbis > 0 else -delta)
        fcur = float(f(xcur))
    raise MaxIterations(f"no convergence in {max_iter} iterations")


def expanding_bracket(f: Callable[[float], float], lo: float, hi: float, lo_min: float,
                      hi_max: float, factor: float = 10.0) -> tuple[float, float]:
    """Widen ``[lo, hi]`` geometrically until ``f`` changes sign, within ``[lo_min, hi_max]``."""
    from ..errors import BracketFailure

    flo, fhi = f(lo), f(hi)
    while (flo > 0) == (fhi > 0) and flo != 0 and fhi != 0:
        if lo <= lo_min and hi >= hi_max:
            raise BracketFailure(f"no sign change of f on [{lo_min:g}, {hi_max:g}]")
        lo, hi = max(lo / factor, lo_min), min(hi * factor, hi_max)
        flo, fhi = f(lo), f(hi)
    return lo, hi
