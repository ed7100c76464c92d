"""numba implementations of the hot kernels.

Every function here has a vectorized twin in ``_numpy.py`` with identical
semantics; the test suite cross-checks the two.
"""
import math

import numpy as np
from numba import njit

_INF = np.inf

# potential codes, kept in sync with kernels.__init__
ZERO, QUADRATIC, ABS, BOX, POSITIVE_PART = 0, 1, 2, 3, 4


@njit(cache=True)
def _ball_one(xt, center, radius, out, dk):
    # returns |dk|; dk is formed from (xt - c) * (scale - 1) so it stays
    # exactly radial even for tiny overshoots
    m = xt.shape[0]
    r2 = 0.0
    for j in range(m):
        r2 += (xt[j] - center[j]) ** 2
    r = math.sqrt(r2)
    if r <= radius:
        for j in range(m):
            out[j] = xt[j]
            dk[j] = 0.0
        return 0.0
    scale = radius / r
    for _ in range(64):
        n2 = 0.0
        for j in range(m):
            out[j] = center[j] + (xt[j] - center[j]) * scale
            n2 += (out[j] - center[j]) ** 2
        if math.sqrt(n2) <= radius:
            break
        # rounding left the point a hair outside; shrink by an ulp-ish step
        scale *= 1.0 - 2.3e-16
    for j in range(m):
        dk[j] = (xt[j] - center[j]) * (scale - 1.0)
    return r * (1.0 - scale)


@njit(cache=True)
def reflect_ball(xt, center, radius):
    n, m = xt.shape
    x = np.empty_like(xt)
    dk = np.empty_like(xt)
    dknorm = np.empty(n)
    for i in range(n):
        dknorm[i] = _ball_one(xt[i], center, radius, x[i], dk[i])
    return x, dk, dknorm


@njit(cache=True)
def reflect_box(xt, lower, upper):
    n, m = xt.shape
    x = np.empty_like(xt)
    dk = np.empty_like(xt)
    dknorm = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(m):
            v = xt[i, j]
            if v < lower[j]:
                v = lower[j]
            elif v > upper[j]:
                v = upper[j]
            x[i, j] = v
            dk[i, j] = v - xt[i, j]
            s += dk[i, j] * dk[i, j]
        dknorm[i] = math.sqrt(s)
    return x, dk, dknorm


@njit(cache=True)
def _dright(kind, p0, p1, y):
    if kind == QUADRATIC:
        return p0 * y
    if kind == ABS:
        return p0 if y >= 0.0 else -p0
    if kind == BOX:
        if y < p0:
            return -_INF
        if y >= p1:
            return _INF
        return 0.0
    if kind == POSITIVE_PART:
        return -p0 if y < 0.0 else 0.0
    return 0.0


@njit(cache=True)
def _dleft(kind, p0, p1, y):
    if kind == QUADRATIC:
        return p0 * y
    if kind == ABS:
        return -p0 if y <= 0.0 else p0
    if kind == BOX:
        if y <= p0:
            return -_INF
        if y > p1:
            return _INF
        return 0.0
    if kind == POSITIVE_PART:
        return -p0 if y <= 0.0 else 0.0
    return 0.0


@njit(cache=True)
def _piece(kind, p0, p1, y):
    # derivative on the smooth piece containing y: alpha + beta * y
    if kind == QUADRATIC:
        return 0.0, p0
    if kind == ABS:
        return (p0 if y > 0.0 else -p0), 0.0
    if kind == POSITIVE_PART:
        return (-p0 if y < 0.0 else 0.0), 0.0
    return 0.0, 0.0


@njit(cache=True)
def _wd(w, d):
    if w == 0.0:
        return 0.0
    return w * d


@njit(cache=True)
def _fplus(y, v, wa, ka, a0, a1, wb, kb, b0, b1):
    return y - v + _wd(wa, _dright(ka, a0, a1, y)) + _wd(wb, _dright(kb, b0, b1, y))


@njit(cache=True)
def _fminus(y, v, wa, ka, a0, a1, wb, kb, b0, b1):
    return y - v + _wd(wa, _dleft(ka, a0, a1, y)) + _wd(wb, _dleft(kb, b0, b1, y))


@njit(cache=True)
def _is_root(k, v, wa, ka, a0, a1, wb, kb, b0, b1):
    return (_fminus(k, v, wa, ka, a0, a1, wb, kb, b0, b1) <= 0.0
            and _fplus(k, v, wa, ka, a0, a1, wb, kb, b0, b1) >= 0.0)


@njit(cache=True)
def _prox_scalar(kind, p0, p1, v, w):
    if kind == QUADRATIC:
        return v / (1.0 + w * p0)
    if kind == ABS:
        t = w * p0
        if v > t:
            return v - t
        if v < -t:
            return v + t
        return 0.0
    if kind == BOX:
        return min(max(v, p0), p1)
    if kind == POSITIVE_PART:
        t = w * p0
        if v < -t:
            return v + t
        if v < 0.0:
            return 0.0
        return v
    return v


@njit(cache=True)
def _kink_root(kind, p0, p1, w, y, band, v, wa, ka, a0, a1, wb, kb, b0, b1):
    # a kink of this potential within band of y that satisfies the inclusion
    if w == 0.0:
        return np.nan
    if kind == ABS or kind == POSITIVE_PART:
        if abs(y) <= band and _is_root(0.0, v, wa, ka, a0, a1, wb, kb, b0, b1):
            return 0.0
    elif kind == BOX:
        if math.isfinite(p0) and abs(p0 - y) <= band and _is_root(
                p0, v, wa, ka, a0, a1, wb, kb, b0, b1):
            return p0
        if math.isfinite(p1) and abs(p1 - y) <= band and _is_root(
                p1, v, wa, ka, a0, a1, wb, kb, b0, b1):
            return p1
    return np.nan


@njit(cache=True)
def _solve_scalar(v, wa, ka, a0, a1, wb, kb, b0, b1, tol):
    if wa == 0.0 and wb == 0.0:
        return v, 0
    # a single active potential has a closed-form resolvent
    if wb == 0.0:
        return _prox_scalar(ka, a0, a1, v, wa), 0
    if wa == 0.0:
        return _prox_scalar(kb, b0, b1, v, wb), 0
    lo = v
    hi = v
    step = 1.0
    if _fplus(v, v, wa, ka, a0, a1, wb, kb, b0, b1) >= 0.0:
        lo = v - step
        while _fplus(lo, v, wa, ka, a0, a1, wb, kb, b0, b1) >= 0.0:
            step *= 2.0
            lo = v - step
            if not math.isfinite(lo):
                return np.nan, 1
    else:
        hi = v + step
        while _fplus(hi, v, wa, ka, a0, a1, wb, kb, b0, b1) < 0.0:
            step *= 2.0
            hi = v + step
            if not math.isfinite(hi):
                return np.nan, 1
    for _ in range(2000):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _fplus(mid, v, wa, ka, a0, a1, wb, kb, b0, b1) >= 0.0:
            hi = mid
        else:
            lo = mid
    y = hi
    # polish: snap to a kink that satisfies the inclusion, else solve the
    # affine piece exactly
    band = 1e-8 * (1.0 + abs(y))
    k = _kink_root(ka, a0, a1, wa, y, band, v, wa, ka, a0, a1, wb, kb, b0, b1)
    if not math.isnan(k):
        return k, 0
    k = _kink_root(kb, b0, b1, wb, y, band, v, wa, ka, a0, a1, wb, kb, b0, b1)
    if not math.isnan(k):
        return k, 0
    mid = 0.5 * (lo + hi)
    al_a, be_a = _piece(ka, a0, a1, mid)
    al_b, be_b = _piece(kb, b0, b1, mid)
    y_lin = (v - _wd(wa, al_a) - _wd(wb, al_b)) / (1.0 + _wd(wa, be_a) + _wd(wb, be_b))
    if abs(y_lin - y) <= band:
        return y_lin, 0
    return y, 0


@njit(cache=True)
def resolvent_decoupled(v, wa, wb, ka, a0, a1, kb, b0, b1, tol):
    n, d = v.shape
    y = np.empty_like(v)
    u = np.empty_like(v)
    w = np.empty_like(v)
    status = np.zeros((n, d), dtype=np.int64)
    for i in range(n):
        for j in range(d):
            vij = v[i, j]
            yij, st = _solve_scalar(vij, wa[i], ka, a0, a1, wb[i], kb, b0, b1, tol)
            status[i, j] = st
            y[i, j] = yij
            r = vij - yij
            if wb[i] == 0.0:
                u[i, j] = r
                w[i, j] = 0.0
            elif wa[i] == 0.0:
                u[i, j] = 0.0
                w[i, j] = r
            else:
                ulo = wa[i] * _dleft(ka, a0, a1, yij)
                uhi = wa[i] * _dright(ka, a0, a1, yij)
                c = min(max(0.0, _dleft(kb, b0, b1, yij)), _dright(kb, b0, b1, yij))
                uu = min(max(r - wb[i] * c, ulo), uhi)
                u[i, j] = uu
                w[i, j] = r - uu
    return y, u, w, status
