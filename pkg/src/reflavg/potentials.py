"""Convex potentials, their proximal maps, Moreau envelopes and Yosida gradients.

A potential acts on the last axis of its argument, so ``eval`` maps (..., d)
to (...) and ``prox(v, gamma)`` maps (..., d) to (..., d).  ``gamma`` may be
a scalar or broadcast against the leading axes of ``v``.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import InvalidArgument, NumericalFailure


@dataclass(frozen=True)
class ConvexPotential:
    dimension: int
    eval: Callable
    prox: Callable
    decoupled: bool = False
    kind: str = "user"
    code: int = -1
    params: tuple = (0.0, 0.0)
    config: dict = field(default_factory=dict)

    @property
    def has_kernel(self):
        return self.decoupled and self.code >= 0


def _gamma_col(gamma, v):
    g = np.asarray(gamma, dtype=float)
    if g.ndim == 0:
        return g
    return g.reshape(g.shape + (1,) * (np.ndim(v) - g.ndim))


def _check_gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if not np.all(g > 0):
        raise InvalidArgument(f"gamma must be positive, got {gamma!r}")


def zero_potential(d=1) -> ConvexPotential:
    def ev(y):
        return np.zeros(np.shape(y)[:-1])

    def prox(v, gamma):
        return np.array(v, dtype=float)

    return ConvexPotential(d, ev, prox, True, "zero", kernels.ZERO,
                           config={"kind": "zero"})


def quadratic_potential(d=1, lam=1.0) -> ConvexPotential:
    """lam * |y|^2 / 2."""
    if not lam >= 0:
        raise InvalidArgument(f"lam must be nonnegative, got {lam!r}")
    lam = float(lam)

    def ev(y):
        y = np.asarray(y, dtype=float)
        return 0.5 * lam * np.sum(y * y, axis=-1)

    def prox(v, gamma):
        v = np.asarray(v, dtype=float)
        return v / (1.0 + _gamma_col(gamma, v) * lam)

    return ConvexPotential(d, ev, prox, True, "quadratic", kernels.QUADRATIC, (lam, 0.0),
                           config={"kind": "quadratic", "lam": lam})


def abs_potential(d=1, weight=1.0) -> ConvexPotential:
    """weight * |y|_1 (soft thresholding prox)."""
    if not weight >= 0:
        raise InvalidArgument(f"weight must be nonnegative, got {weight!r}")
    c = float(weight)

    def ev(y):
        return c * np.sum(np.abs(np.asarray(y, dtype=float)), axis=-1)

    def prox(v, gamma):
        v = np.asarray(v, dtype=float)
        t = _gamma_col(gamma, v) * c
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)

    return ConvexPotential(d, ev, prox, True, "abs", kernels.ABS, (c, 0.0),
                           config={"kind": "abs", "weight": c})


def box_indicator(d=1, lower=-1.0, upper=1.0) -> ConvexPotential:
    """Indicator of [lower, upper]^d; either bound may be infinite."""
    lo = -np.inf if lower is None else float(lower)
    hi = np.inf if upper is None else float(upper)
    if not lo <= hi:
        raise InvalidArgument(f"need lower <= upper, got [{lo}, {hi}]")

    def ev(y):
        y = np.asarray(y, dtype=float)
        inside = np.all((y >= lo) & (y <= hi), axis=-1)
        return np.where(inside, 0.0, np.inf)

    def prox(v, gamma):
        return np.clip(np.asarray(v, dtype=float), lo, hi)

    return ConvexPotential(d, ev, prox, True, "box_indicator", kernels.BOX, (lo, hi),
                           config={"kind": "box_indicator",
                                   "lower": None if np.isinf(lo) else lo,
                                   "upper": None if np.isinf(hi) else hi})


def positive_part_potential(d=1, weight=1.0) -> ConvexPotential:
    """weight * sum_i max(0, -y_i)."""
    if not weight >= 0:
        raise InvalidArgument(f"weight must be nonnegative, got {weight!r}")
    c = float(weight)

    def ev(y):
        return c * np.sum(np.maximum(0.0, -np.asarray(y, dtype=float)), axis=-1)

    def prox(v, gamma):
        v = np.asarray(v, dtype=float)
        t = _gamma_col(gamma, v) * c
        return np.where(v < -t, v + t, np.where(v < 0.0, 0.0, v))

    return ConvexPotential(d, ev, prox, True, "positive_part", kernels.POSITIVE_PART, (c, 0.0),
                           config={"kind": "positive_part", "weight": c})


_FACTORIES = {
    "zero": lambda d, p: zero_potential(d),
    "quadratic": lambda d, p: quadratic_potential(d, p.get("lam", 1.0)),
    "abs": lambda d, p: abs_potential(d, p.get("weight", 1.0)),
    "box_indicator": lambda d, p: box_indicator(d, p.get("lower", -1.0), p.get("upper", 1.0)),
    "positive_part": lambda d, p: positive_part_potential(d, p.get("weight", 1.0)),
}

POTENTIAL_KINDS = tuple(_FACTORIES)


def make_potential(kind, d=1, **params) -> ConvexPotential:
    try:
        factory = _FACTORIES[kind]
    except KeyError:
        raise InvalidArgument(f"unknown potential kind {kind!r}; expected one of {POTENTIAL_KINDS}")
    return factory(d, params)


def moreau_envelope(p: ConvexPotential, v, gamma):
    """min_z eval(z) + |z - v|^2 / (2 gamma)."""
    _check_gamma(gamma)
    v = np.asarray(v, dtype=float)
    z = p.prox(v, gamma)
    r = z - v
    return p.eval(z) + np.sum(r * r, axis=-1) / (2.0 * np.asarray(gamma, dtype=float))


def yosida_gradient(p: ConvexPotential, v, gamma):
    """Gradient of the Moreau envelope, (v - prox(v, gamma)) / gamma."""
    _check_gamma(gamma)
    v = np.asarray(v, dtype=float)
    return (v - p.prox(v, gamma)) / _gamma_col(gamma, v)


def composite_resolvent(p_phi: ConvexPotential, p_psi: ConvexPotential, v, w_phi, w_psi):
    """Solve ``v in y + w_phi*dphi(y) + w_psi*dpsi(y)``.

    Returns ``(y, u, w)`` with ``y + u + w = v``, ``u in w_phi*dphi(y)`` and
    ``w in w_psi*dpsi(y)``.  ``v`` is (d,) or (n, d); weights are scalars or
    (n,).  Decoupled built-in pairs are solved exactly per coordinate;
    anything else falls back to the splitting
    ``y = prox_psi(prox_phi(v, w_phi), w_psi)``, whose decomposition is only
    approximate.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    v2 = np.atleast_2d(v)
    n = v2.shape[0]
    wa = np.broadcast_to(np.asarray(w_phi, dtype=float), (n,))
    wb = np.broadcast_to(np.asarray(w_psi, dtype=float), (n,))
    if np.any(wa < 0) or np.any(wb < 0):
        raise InvalidArgument("resolvent weights must be nonnegative")
    if p_phi.has_kernel and p_psi.has_kernel:
        y, u, w, status = kernels.resolvent_decoupled(
            v2, wa, wb, p_phi.code, p_phi.params, p_psi.code, p_psi.params)
        if np.any(status):
            bad = np.argwhere(status)[0]
            raise NumericalFailure(
                "composite resolvent bisection could not bracket the root",
                diagnostics={"row": int(bad[0]), "coordinate": int(bad[1]),
                             "v": float(v2[tuple(bad)]), "w_phi": float(wa[bad[0]]),
                             "w_psi": float(wb[bad[0]])})
    else:
        y, u, w = _split_resolvent(p_phi, p_psi, v2, wa, wb)
    if single:
        return y[0], u[0], w[0]
    return y, u, w


def _split_resolvent(p_phi, p_psi, v, wa, wb):
    mid = v.copy()
    on = wa > 0
    if on.any():
        mid[on] = p_phi.prox(v[on], wa[on])
    y = mid.copy()
    on = wb > 0
    if on.any():
        y[on] = p_psi.prox(mid[on], wb[on])
    return y, v - mid, mid - y


@dataclass
class MonotonicityReport:
    minimum: float
    n_pairs: int
    violations: int
    tolerance: float = 1e-12

    @property
    def ok(self):
        return self.violations == 0


def graph_monotonicity_certificate(p: ConvexPotential, samples, gamma=0.5, tol=1e-12):
    """Minimum of <y1 - y2, g1 - g2> over sampled graph points.

    Each sample pair ``(v1, v2)`` is mapped into the graph of the
    subdifferential by ``y = prox(v, gamma)``, ``g = yosida_gradient(v, gamma)``.
    """
    pairs = np.asarray(samples, dtype=float)
    if pairs.ndim == 2:
        pairs = pairs[..., None]
    v1, v2 = pairs[:, 0], pairs[:, 1]
    y1, y2 = p.prox(v1, gamma), p.prox(v2, gamma)
    g1, g2 = yosida_gradient(p, v1, gamma), yosida_gradient(p, v2, gamma)
    inner = np.sum((y1 - y2) * (g1 - g2), axis=-1)
    mn = float(inner.min()) if inner.size else 0.0
    return MonotonicityReport(mn, len(inner), int(np.sum(inner < -tol)), tol)


# pairs shipped as (H)-compatible: every decoupled built-in is minimized at 0,
# so the Yosida gradients share sign coordinatewise
def shipped_pairs(d=1):
    kinds = [
        zero_potential(d),
        quadratic_potential(d, 1.0),
        abs_potential(d, 1.0),
        box_indicator(d, -1.0, 1.0),
        positive_part_potential(d, 1.0),
        positive_part_potential(d, 0.5),
    ]
    return [(a, b) for a in kinds for b in kinds]
