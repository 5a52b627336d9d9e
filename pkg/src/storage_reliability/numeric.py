"""Vectorized scalar minimization/root-finding helpers."""

from __future__ import annotations

import math

import numpy as np

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section_min(f, lo, hi, tol: float):
    """Minimize a unimodal f(x) elementwise over the boxes [lo, hi].

    f must accept and return arrays of the common broadcast shape. Returns
    (x_min, f_min) with x located within tol of the true minimizer.
    """
    lo = np.array(np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))[0])
    hi = np.array(np.broadcast_arrays(lo, np.asarray(hi, float))[1])
    span = hi - lo
    widest = float(span.max()) if span.size else 0.0
    if widest <= tol:
        mid = 0.5 * (lo + hi)
        return mid, f(mid)
    n_iter = int(math.ceil(math.log(widest / tol) / math.log(1.0 / _INVPHI)))
    x1 = lo + _INVPHI2 * span
    x2 = lo + _INVPHI * span
    f1 = f(x1)
    f2 = f(x2)
    for _ in range(n_iter):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        span = hi - lo
        x1_old, f1_old = x1, f1
        x1 = np.where(left, lo + _INVPHI2 * span, x2)
        x2 = np.where(left, x1_old, lo + _INVPHI * span)
        new_x = np.where(left, x1, x2)
        new_f = f(new_x)
        f1 = np.where(left, new_f, f2)
        f2 = np.where(left, f1_old, new_f)
    take1 = f1 <= f2
    return np.where(take1, x1, x2), np.where(take1, f1, f2)


def bisect_increasing(f, lo, hi, tol: float):
    """Root of an elementwise increasing f on [lo, hi].

    Converges to the boundary when f has no sign change inside the box.
    """
    lo = np.array(np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))[0])
    hi = np.array(np.broadcast_arrays(lo, np.asarray(hi, float))[1])
    widest = float((hi - lo).max()) if lo.size else 0.0
    if widest <= tol:
        return 0.5 * (lo + hi)
    n_iter = int(math.ceil(math.log2(widest / tol)))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0.0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return 0.5 * (lo + hi)
