"""Pure-numpy fallback kernels (vectorized over all paths at once)."""
import numpy as np

ZERO, QUADRATIC, ABS, BOX, POSITIVE_PART = 0, 1, 2, 3, 4


def reflect_ball(xt, center, radius):
    rel = xt - center
    r = np.sqrt(np.sum(rel * rel, axis=1))
    outside = r > radius
    x = xt.copy()
    dk = np.zeros_like(xt)
    dknorm = np.zeros(xt.shape[0])
    if np.any(outside):
        idx = np.flatnonzero(outside)
        scale = radius / r[idx]
        final = np.empty_like(scale)
        pending = np.arange(idx.size)
        for _ in range(64):
            cand = center + rel[idx[pending]] * scale[pending, None]
            crel = cand - center
            bad = np.sqrt(np.sum(crel * crel, axis=1)) > radius
            x[idx[pending[~bad]]] = cand[~bad]
            final[pending[~bad]] = scale[pending[~bad]]
            if not bad.any():
                break
            # rounding left these a hair outside; shrink by an ulp-ish step
            pending = pending[bad]
            scale[pending] *= 1.0 - 2.3e-16
        dk[idx] = rel[idx] * (final - 1.0)[:, None]
        dknorm[idx] = r[idx] * (1.0 - final)
    return x, dk, dknorm


def reflect_box(xt, lower, upper):
    x = np.minimum(np.maximum(xt, lower), upper)
    dk = x - xt
    return x, dk, np.sqrt(np.sum(dk * dk, axis=1))


def _dright(kind, p0, p1, y):
    if kind == QUADRATIC:
        return p0 * y
    if kind == ABS:
        return np.where(y >= 0.0, p0, -p0)
    if kind == BOX:
        return np.where(y < p0, -np.inf, np.where(y >= p1, np.inf, 0.0))
    if kind == POSITIVE_PART:
        return np.where(y < 0.0, -p0, 0.0)
    return np.zeros_like(y)


def _dleft(kind, p0, p1, y):
    if kind == QUADRATIC:
        return p0 * y
    if kind == ABS:
        return np.where(y <= 0.0, -p0, p0)
    if kind == BOX:
        return np.where(y <= p0, -np.inf, np.where(y > p1, np.inf, 0.0))
    if kind == POSITIVE_PART:
        return np.where(y <= 0.0, -p0, 0.0)
    return np.zeros_like(y)


def _piece(kind, p0, p1, y):
    zero = np.zeros_like(y)
    if kind == QUADRATIC:
        return zero, zero + p0
    if kind == ABS:
        return np.where(y > 0.0, p0, -p0), zero
    if kind == POSITIVE_PART:
        return np.where(y < 0.0, -p0, 0.0), zero
    return zero, zero


def _wd(w, d):
    with np.errstate(invalid="ignore"):
        return np.where(w == 0.0, 0.0, w * d)


def _prox(kind, p0, p1, v, w):
    if kind == QUADRATIC:
        return v / (1.0 + w * p0)
    if kind == ABS:
        t = w * p0
        return np.where(v > t, v - t, np.where(v < -t, v + t, 0.0))
    if kind == BOX:
        return np.minimum(np.maximum(v, p0), p1)
    if kind == POSITIVE_PART:
        t = w * p0
        return np.where(v < -t, v + t, np.where(v < 0.0, 0.0, v))
    return v.copy()


def _kinks(kind, p0, p1):
    if kind in (ABS, POSITIVE_PART):
        return [0.0]
    if kind == BOX:
        return [p0, p1]
    return []


def resolvent_decoupled(v, wa, wb, ka, a0, a1, kb, b0, b1, tol):
    n, d = v.shape
    wa2 = np.broadcast_to(wa[:, None], (n, d))
    wb2 = np.broadcast_to(wb[:, None], (n, d))

    def fplus(y):
        return y - v + _wd(wa2, _dright(ka, a0, a1, y)) + _wd(wb2, _dright(kb, b0, b1, y))

    def fminus(y):
        return y - v + _wd(wa2, _dleft(ka, a0, a1, y)) + _wd(wb2, _dleft(kb, b0, b1, y))

    status = np.zeros((n, d), dtype=np.int64)
    right_of_root = fplus(v) >= 0.0
    lo = v.copy()
    hi = v.copy()
    step = np.ones_like(v)
    lo[right_of_root] -= 1.0
    hi[~right_of_root] += 1.0
    for _ in range(1100):
        need_lo = right_of_root & (fplus(lo) >= 0.0)
        need_hi = ~right_of_root & (fplus(hi) < 0.0)
        if not (need_lo.any() or need_hi.any()):
            break
        step = np.where(need_lo | need_hi, 2.0 * step, step)
        lo = np.where(need_lo, v - step, lo)
        hi = np.where(need_hi, v + step, hi)
        stuck = ~np.isfinite(lo) | ~np.isfinite(hi)
        if stuck.any():
            status[stuck] = 1
            lo[stuck] = hi[stuck] = 0.0
            right_of_root &= ~stuck
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        active = (hi - lo > tol) & (mid > lo) & (mid < hi)
        if not active.any():
            break
        go_left = fplus(mid) >= 0.0
        hi = np.where(active & go_left, mid, hi)
        lo = np.where(active & ~go_left, mid, lo)
    y = hi.copy()
    band = 1e-8 * (1.0 + np.abs(y))
    mid = 0.5 * (lo + hi)
    al_a, be_a = _piece(ka, a0, a1, mid)
    al_b, be_b = _piece(kb, b0, b1, mid)
    y_lin = (v - _wd(wa2, al_a) - _wd(wb2, al_b)) / (1.0 + _wd(wa2, be_a) + _wd(wb2, be_b))
    snapped = np.zeros_like(y, dtype=bool)
    # kinks first, in the same order as the compiled kernel
    for w2, kind, p0, p1 in ((wa2, ka, a0, a1), (wb2, kb, b0, b1)):
        for k in _kinks(kind, p0, p1):
            if not np.isfinite(k):
                continue
            kk = np.full_like(y, k)
            hit = ~snapped & (w2 != 0.0) & (np.abs(kk - y) <= band)
            if hit.any():
                hit &= (fminus(kk) <= 0.0) & (fplus(kk) >= 0.0)
                y = np.where(hit, k, y)
                snapped |= hit
    lin = ~snapped & (np.abs(y_lin - y) <= band)
    y = np.where(lin, y_lin, y)
    # a single active potential has a closed-form resolvent
    y = np.where(wb2 == 0.0, _prox(ka, a0, a1, v, wa2), y)
    y = np.where((wa2 == 0.0) & (wb2 != 0.0), _prox(kb, b0, b1, v, wb2), y)
    both_zero = (wa2 == 0.0) & (wb2 == 0.0)
    y = np.where(both_zero, v, y)
    y[status == 1] = np.nan

    r = v - y
    ulo = _wd(wa2, _dleft(ka, a0, a1, y))
    uhi = _wd(wa2, _dright(ka, a0, a1, y))
    c = np.minimum(np.maximum(0.0, _dleft(kb, b0, b1, y)), _dright(kb, b0, b1, y))
    with np.errstate(invalid="ignore"):
        uu = np.minimum(np.maximum(r - wb2 * c, ulo), uhi)
    u = np.where(wb2 == 0.0, r, np.where(wa2 == 0.0, 0.0, uu))
    w = np.where(wb2 == 0.0, 0.0, r - u)
    return y, u, w, status
