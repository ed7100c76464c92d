"""Hot numeric kernels with a numba path and a numpy fallback.

The active backend is chosen by :mod:`reflavg._accel`; each wrapper here
normalizes dtypes/contiguity and forwards to the selected implementation.
"""
import numpy as np

from .. import _accel
from . import _numpy

ZERO, QUADRATIC, ABS, BOX, POSITIVE_PART = 0, 1, 2, 3, 4

RESOLVENT_TOL = 1e-12

_numba_mod = None


def _impl():
    global _numba_mod
    if _accel.get_backend() == "numba":
        if _numba_mod is None:
            from . import _numba as mod

            _numba_mod = mod
        return _numba_mod
    return _numpy


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def reflect_ball(xt, center, radius):
    """Radial projection onto the closed ball; returns (x, dk, |dk|)."""
    return _impl().reflect_ball(_f64(xt), _f64(center), float(radius))


def reflect_box(xt, lower, upper):
    """Coordinate clamp onto a (possibly unbounded) box; returns (x, dk, |dk|)."""
    return _impl().reflect_box(_f64(xt), _f64(lower), _f64(upper))


def resolvent_decoupled(v, w_phi, w_psi, code_phi, params_phi, code_psi, params_psi,
                        tol=RESOLVENT_TOL):
    """Per-coordinate solution of ``v in y + w_phi*dphi(y) + w_psi*dpsi(y)``.

    ``v`` has shape (n, d); the weights have shape (n,).  Returns
    ``(y, u, w, status)`` where ``u`` and ``w`` are the weighted subgradient
    selections and ``status`` is nonzero where no bracket was found.
    """
    v = _f64(v)
    n = v.shape[0]
    wa = _f64(np.broadcast_to(w_phi, (n,)))
    wb = _f64(np.broadcast_to(w_psi, (n,)))
    a0, a1 = (float(p) for p in params_phi)
    b0, b1 = (float(p) for p in params_psi)
    return _impl().resolvent_decoupled(v, wa, wb, int(code_phi), a0, a1,
                                       int(code_psi), b0, b1, float(tol))
