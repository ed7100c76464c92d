"""Time-dependent coefficient fields, their time averages, and an assumption audit.

Coefficient callables are vectorized over a leading batch axis: with ``x`` of
shape (n, m) and ``y`` of shape (n, d), ``b(s, x)`` is (n, m),
``sigma(s, x)`` is (n, m, m), ``f(s, x, y)`` and ``g(s, x, y)`` are (n, d)
and ``terminal(x)`` is (n, d).  ``s`` is a Python float, except for sets
flagged ``time_vectorized``: those also accept a 1-D array of K times and
return results stacked on a new leading axis of length K, which lets the
quadrature evaluate all nodes in one call.
"""
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EllipticityViolation, InvalidArgument, NonAveragingError, NumericalFailure
from .potentials import yosida_gradient

PERIOD_NODES = 64
GL_ORDER = 16
DEFAULT_AVERAGE_TOL = 1e-8


@dataclass
class CoefficientSet:
    m: int
    d: int
    b: Callable
    sigma: Callable
    f: Callable
    g: Callable
    terminal: Callable
    period: Optional[float] = None
    time_homogeneous: bool = False
    time_vectorized: bool = False
    L1: float = 1.0
    L3: float = 1.0
    L4: float = 1.0
    iota: float = 1.0
    name: str = "user"

    def __post_init__(self):
        for label in ("L1", "L3", "L4", "iota"):
            if not getattr(self, label) > 0:
                raise InvalidArgument(f"{label} must be positive")
        if self.period is not None and not self.period > 0:
            raise InvalidArgument(f"period must be positive, got {self.period!r}")


# -- quadrature ---------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def period_nodes(period, n_nodes=PERIOD_NODES, order=GL_ORDER):
    """Composite Gauss-Legendre nodes/weights on [0, period], weights summing to 1."""
    if n_nodes % order:
        raise InvalidArgument(f"n_nodes must be a multiple of {order}")
    panels = n_nodes // order
    x, w = np.polynomial.legendre.leggauss(order)
    h = period / panels
    nodes = np.concatenate([(k + 0.5 * (x + 1.0)) * h for k in range(panels)])
    weights = np.tile(0.5 * w, panels) / panels
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def _periodic_average(fun, period, n_nodes=PERIOD_NODES, vectorized=False):
    nodes, weights = period_nodes(period, n_nodes)
    if vectorized:
        vals = np.asarray(fun(nodes), dtype=float)
        if vals.ndim == 0 or vals.shape[0] != nodes.size:
            raise InvalidArgument(
                f"time_vectorized coefficient returned shape {vals.shape} for {nodes.size} "
                "times; expected results stacked on a leading time axis")
        return np.tensordot(weights, vals, axes=1)
    acc = None
    for s, w in zip(nodes, weights):
        term = w * np.asarray(fun(float(s)), dtype=float)
        acc = term if acc is None else acc + term
    return acc


def _horizon_average(fun, t0=2 * math.pi, tol=DEFAULT_AVERAGE_TOL, max_doublings=20,
                     n_sub=1024):
    h = t0 / n_sub

    def trapezoid(a, n):
        acc = 0.5 * (np.asarray(fun(a), dtype=float) + np.asarray(fun(a + n * h), dtype=float))
        for k in range(1, n):
            acc = acc + np.asarray(fun(a + k * h), dtype=float)
        return acc * h

    integral = trapezoid(0.0, n_sub)
    horizon = t0
    prev = integral / horizon
    diff = None
    for k in range(max_doublings):
        integral = integral + trapezoid(horizon, n_sub * 2 ** k)
        horizon *= 2.0
        cur = integral / horizon
        diff = np.abs(cur - prev)
        if np.all(diff < tol):
            return cur
        prev = cur
    worst = np.unravel_index(int(np.argmax(diff)), diff.shape) if diff.ndim else ()
    raise NonAveragingError(
        f"time average did not settle after {max_doublings} doublings "
        f"(horizon {horizon:.4g}); worst component {worst} moved by {float(np.max(diff)):.3e}",
        diagnostics={"component": worst, "change": float(np.max(diff)), "horizon": horizon})


def spd_sqrt(a, iota, sym_tol=1e-10):
    """Principal square root of a batch of SPD matrices, shape (..., m, m)."""
    a = np.asarray(a, dtype=float)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0) > sym_tol * scale:
        raise NumericalFailure("averaged diffusion matrix is not symmetric")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    if a.shape[-1] == 1:
        lam = a[..., 0, 0]
        if np.any(lam < 0.5 * iota):
            raise EllipticityViolation(
                f"averaged diffusion eigenvalue {float(lam.min()):.3e} below iota/2 = {0.5 * iota:.3e}")
        return np.sqrt(a)
    lam, vec = np.linalg.eigh(a)
    if np.any(lam < 0.5 * iota):
        raise EllipticityViolation(
            f"averaged diffusion eigenvalue {float(lam.min()):.3e} below iota/2 = {0.5 * iota:.3e}")
    return (vec * np.sqrt(lam)[..., None, :]) @ np.swapaxes(vec, -1, -2)


def _sigma_sigma_t(c, s, x):
    sig = np.asarray(c.sigma(s, x), dtype=float)
    if sig.shape[-1] == 1:
        return sig * sig
    # broadcast-and-sum beats batched matmul for tiny matrices
    return np.sum(sig[..., :, None, :] * sig[..., None, :, :], axis=-1)


# -- averaged coefficients ----------------------------------------------------

class AveragedCoefficients:
    """Time averages b_bar, a_bar, sigma_bar, f_bar of a CoefficientSet.

    Batch calls (x of shape (n, m)) are computed directly.  Single-point calls
    (x of shape (m,)) are memoized on the exact bytes of their arguments.
    """

    def __init__(self, c: CoefficientSet, method_tag=None, average_tolerance=DEFAULT_AVERAGE_TOL,
                 n_nodes=PERIOD_NODES, horizon_t0=2 * math.pi, max_doublings=20, memoize=True):
        if method_tag is None:
            if c.time_homogeneous:
                method_tag = "time-homogeneous"
            elif c.period is not None:
                method_tag = "periodic-quadrature"
            else:
                method_tag = "horizon-doubling"
        if method_tag == "periodic-quadrature" and c.period is None:
            raise InvalidArgument("periodic-quadrature needs a period")
        self.c = c
        self.method_tag = method_tag
        self.average_tolerance = average_tolerance
        self.n_nodes = n_nodes
        self.horizon_t0 = horizon_t0
        self.max_doublings = max_doublings
        self._memo = {} if memoize else None

    def _average(self, fun):
        if self.method_tag == "time-homogeneous":
            return np.asarray(fun(0.0), dtype=float)
        if self.method_tag == "periodic-quadrature":
            return _periodic_average(fun, self.c.period, self.n_nodes, self.c.time_vectorized)
        return _horizon_average(fun, self.horizon_t0, self.average_tolerance, self.max_doublings)

    def _cached(self, tag, args, compute):
        if self._memo is None:
            return compute()
        key = (tag,) + tuple(np.ascontiguousarray(a, dtype=float).tobytes() for a in args)
        hit = self._memo.get(key)
        if hit is None:
            hit = compute()
            self._memo[key] = hit
        return hit.copy()

    def _point_or_batch(self, tag, x, batch_fn, *extra):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            args = (x,) + tuple(np.asarray(e, dtype=float) for e in extra)
            return self._cached(tag, args, lambda: batch_fn(
                x[None], *(np.asarray(e, dtype=float)[None] for e in extra))[0])
        return batch_fn(x, *(np.asarray(e, dtype=float) for e in extra))

    def b_bar(self, x):
        return self._point_or_batch("b", x, lambda xb: self._average(lambda s: self.c.b(s, xb)))

    def a_bar(self, x):
        return self._point_or_batch(
            "a", x, lambda xb: self._average(lambda s: _sigma_sigma_t(self.c, s, xb)))

    def sigma_bar(self, x):
        return self._point_or_batch("sigma", x, self._sigma_bar_batch)

    def _sigma_bar_batch(self, xb):
        if self.method_tag == "time-homogeneous":
            sig = np.asarray(self.c.sigma(0.0, xb), dtype=float)
            # a symmetric positive definite sigma is already the principal root
            if np.array_equal(sig, np.swapaxes(sig, -1, -2)) and np.all(
                    np.linalg.eigvalsh(sig) > 0):
                return sig.copy()
        return spd_sqrt(self._average(lambda s: _sigma_sigma_t(self.c, s, xb)), self.c.iota)

    def diffusion(self, x):
        """(a_bar, sigma_bar) at x, computed from a single averaging pass."""
        x = np.asarray(x, dtype=float)
        if self.method_tag == "time-homogeneous":
            return self.a_bar(x), self.sigma_bar(x)
        a = self.a_bar(x)
        return a, spd_sqrt(a, self.c.iota)

    def f_bar(self, x, y):
        return self._point_or_batch(
            "f", x, lambda xb, yb: self._average(lambda s: self.c.f(s, xb, yb)), y)


def average_coefficients(c: CoefficientSet, **kwargs) -> AveragedCoefficients:
    return AveragedCoefficients(c, **kwargs)


def average_drift(c: CoefficientSet, x, **kwargs):
    return AveragedCoefficients(c, **kwargs).b_bar(x)


def average_diffusion(c: CoefficientSet, x, **kwargs):
    """Returns ``(a_bar, sigma_bar)``; sigma_bar is the principal SPD root of a_bar."""
    return AveragedCoefficients(c, **kwargs).diffusion(x)


def average_driver(c: CoefficientSet, x, y, **kwargs):
    return AveragedCoefficients(c, **kwargs).f_bar(x, y)


# -- assumption audit ---------------------------------------------------------

@dataclass
class AuditEntry:
    estimate: float
    declared: Optional[float] = None
    violated: bool = False
    note: str = ""


@dataclass
class AuditReport:
    entries: dict = field(default_factory=dict)
    sample_budget: int = 0
    seed: int = 0

    @property
    def violations(self):
        return [k for k, e in self.entries.items() if e.violated]

    def to_dict(self):
        return {
            "sample_budget": self.sample_budget,
            "seed": self.seed,
            "violations": self.violations,
            "entries": {k: {"estimate": _jsonable(e.estimate), "declared": e.declared,
                            "violated": e.violated, "note": e.note}
                        for k, e in self.entries.items()},
        }


def _jsonable(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _ratio_max(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0),
                     np.where(num > 1e-14, np.inf, 0.0))
    return float(np.max(r)) if r.size else 0.0


def audit_assumptions(c: CoefficientSet, p_phi, p_psi, sample_budget=2000, seed=0,
                      domain=None, x_box=(-1.0, 1.0), y_box=(-1.0, 1.0),
                      gammas=(1e-3, 1e-2, 1e-1, 1.0)) -> AuditReport:
    """Empirical worst-case ratios for the growth/Lipschitz/ellipticity and
    compatibility inequalities.  Violations are reported, never raised."""
    if sample_budget < 1:
        raise InvalidArgument("sample_budget must be >= 1")
    rng = np.random.default_rng(seed)
    n, m, d = int(sample_budget), c.m, c.d
    s_hi = c.period if c.period is not None else 2 * math.pi
    s = rng.uniform(0.0, s_hi, n)

    def sample_x(k):
        x = rng.uniform(x_box[0], x_box[1], (k, m))
        if domain is not None:
            x = domain.project(x)
        return x

    def sample_boundary(k):
        if domain is None:
            return sample_x(k)
        dirs = rng.standard_normal((k, m))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        far = domain.interior_point() + 1e3 * dirs
        return domain.project(far)

    x1, x2 = sample_x(n), sample_x(n)
    y1, y2 = rng.uniform(y_box[0], y_box[1], (n, d)), rng.uniform(y_box[0], y_box[1], (n, d))
    xb1, xb2 = sample_boundary(n), sample_boundary(n)
    h = rng.standard_normal((n, m))
    h /= np.linalg.norm(h, axis=1, keepdims=True)

    def per_s(fn, *args):
        return np.stack([np.asarray(fn(float(si), *(a[i:i + 1] for a in args)))[0]
                         for i, si in enumerate(s)])

    b1, b2 = per_s(c.b, x1), per_s(c.b, x2)
    sg1, sg2 = per_s(c.sigma, x1), per_s(c.sigma, x2)
    f1, f2 = per_s(c.f, x1, y1), per_s(c.f, x2, y2)
    g1, g2 = per_s(c.g, xb1, y1), per_s(c.g, xb2, y2)
    g0 = per_s(c.g, xb1, np.zeros_like(y1))
    f0 = per_s(c.f, x1, np.zeros_like(y1))

    sq = lambda a: np.sum(a.reshape(a.shape[0], -1) ** 2, axis=1)  # noqa: E731
    dx2 = sq(x1 - x2)
    dxy2 = dx2 + sq(y1 - y2)
    dxby2 = sq(xb1 - xb2) + sq(y1 - y2)
    e = {}

    est = _ratio_max(sq(b1 - b2) + sq(sg1 - sg2), dx2)
    e["b_sigma_lipschitz"] = AuditEntry(est, c.L1, est > c.L1 * (1 + 1e-9))
    e["b_lipschitz"] = AuditEntry(math.sqrt(_ratio_max(sq(b1 - b2), dx2)), None, False,
                                  "Lipschitz constant of b in x (not squared)")
    est = _ratio_max(sq(b1), 1.0 + sq(x1))
    e["b_growth"] = AuditEntry(est, c.L1, est > c.L1 * (1 + 1e-9))
    est = float(np.max(sq(sg1)))
    e["sigma_bound"] = AuditEntry(est, c.L1, est > c.L1 * (1 + 1e-9), "Frobenius norm squared")
    aa = sg1 @ np.swapaxes(sg1, -1, -2)
    quad = np.einsum("ni,nij,nj->n", h, aa, h)
    est = float(np.min(quad))
    e["ellipticity"] = AuditEntry(est, c.iota, est < c.iota * (1 - 1e-9))
    est = _ratio_max(sq(f1 - f2), dxy2)
    e["f_lipschitz"] = AuditEntry(est, c.L3, est > c.L3 * (1 + 1e-9))
    est = _ratio_max(sq(f1), 1.0 + sq(x1) + sq(y1))
    e["f_growth"] = AuditEntry(est, c.L3, est > c.L3 * (1 + 1e-9))
    est = _ratio_max(sq(g1 - g2), dxby2)
    e["g_lipschitz"] = AuditEntry(est, c.L4, est > c.L4 * (1 + 1e-9))
    est = _ratio_max(sq(g1), 1.0 + sq(xb1) + sq(y1))
    e["g_growth"] = AuditEntry(est, c.L4, est > c.L4 * (1 + 1e-9))

    # normalization of the potentials: phi(0) = 0 <= phi, 0 interior to Dom
    for label, p in (("phi", p_phi), ("psi", p_psi)):
        zero = np.zeros((1, d))
        vals = p.eval(np.concatenate([y1, y2]))
        probe = np.concatenate([np.eye(d), -np.eye(d)]) * 1e-6
        ok0 = float(p.eval(zero)[0]) == 0.0
        nonneg = bool(np.all(vals >= 0))
        interior = bool(np.all(np.isfinite(p.eval(probe))))
        e[f"{label}_normalization"] = AuditEntry(
            float(np.min(vals)), None, not (ok0 and nonneg and interior),
            f"value at 0 is zero: {ok0}; nonnegative: {nonneg}; 0 interior to domain: {interior}")

    compat = np.inf
    l2 = {k: 0.0 for k in ("phi_g", "psi_f", "phi_g0", "psi_f0")}
    for gam in gammas:
        dphi = yosida_gradient(p_phi, y1, gam)
        dpsi = yosida_gradient(p_psi, y1, gam)
        compat = min(compat, float(np.min(np.sum(dphi * dpsi, axis=1))))
        nphi = np.linalg.norm(dphi, axis=1)
        npsi = np.linalg.norm(dpsi, axis=1)
        l2["phi_g"] = max(l2["phi_g"], _ratio_max(np.sum(dphi * g1, axis=1),
                                                   npsi * (1 + np.linalg.norm(g1, axis=1))))
        l2["psi_f"] = max(l2["psi_f"], _ratio_max(np.sum(dpsi * f1, axis=1),
                                                   nphi * (1 + np.linalg.norm(f1, axis=1))))
        l2["phi_g0"] = max(l2["phi_g0"], _ratio_max(-np.sum(dphi * g0, axis=1),
                                                     npsi * (1 + np.linalg.norm(g0, axis=1))))
        l2["psi_f0"] = max(l2["psi_f0"], _ratio_max(-np.sum(dpsi * f0, axis=1),
                                                     nphi * (1 + np.linalg.norm(f0, axis=1))))
    e["yosida_compatibility"] = AuditEntry(compat, 0.0, compat < -1e-12,
                                           "min <grad phi_gamma, grad psi_gamma>")
    for k, v in l2.items():
        e[f"mixed_{k}"] = AuditEntry(v, None, not math.isfinite(v),
                                     "estimated L2; infinite means no finite constant works")
    return AuditReport(e, n, seed)


# -- model library ------------------------------------------------------------

_REGISTRY = {}


def register_model(name, factory):
    """Register ``factory(**params) -> CoefficientSet`` under ``name``."""
    _REGISTRY[name] = factory


def make_model(name, **params) -> CoefficientSet:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise InvalidArgument(f"unknown model {name!r}; registered: {sorted(_REGISTRY)}")
    return factory(**params)


def model_names():
    return sorted(_REGISTRY)


def _tcol(s, trailing):
    """Scalar time as float; array of times as shape (K, 1, ..., 1)."""
    if np.ndim(s) == 0:
        return float(s)
    return np.asarray(s, dtype=float).reshape((-1,) + (1,) * trailing)


def _stacked(values, s, shape):
    return np.broadcast_to(values, (() if np.ndim(s) == 0 else (np.size(s),)) + shape).copy()


def periodic_linear(m=1, kappa=0.5, sigma_amp=0.5, g_coef=0.2):
    """b = (1 + sin s)(-kappa x), sigma = sqrt(1 + a sin s) I,
    f = (1 + cos s)(x_1 - y), g = -g_coef y, terminal = x_1; period 2 pi."""
    if not 0 <= sigma_amp < 1:
        raise InvalidArgument("sigma_amp must lie in [0, 1)")
    eye = np.eye(m)

    def b(s, x):
        return (1.0 + np.sin(_tcol(s, 2))) * (-kappa) * x

    def sigma(s, x):
        amp = np.sqrt(1.0 + sigma_amp * np.sin(_tcol(s, 3)))
        return _stacked(amp * eye, s, (x.shape[0], m, m))

    def f(s, x, y):
        return (1.0 + np.cos(_tcol(s, 2))) * (x[:, :1] - y)

    def g(s, x, y):
        return -g_coef * y

    def terminal(x):
        return x[:, :1].copy()

    return CoefficientSet(m, 1, b, sigma, f, g, terminal, period=2 * math.pi,
                          time_vectorized=True,
                          L1=max(4 * kappa ** 2, (1 + sigma_amp) * m), L3=8.0,
                          L4=max(g_coef ** 2, 1e-12), iota=1 - sigma_amp,
                          name="periodic_linear")


def periodic_rotation(diag=(1.0, 2.0), g_coef=0.1):
    """2-D model: sigma = R(s) D, b = cos^2(s)(-x), f = sin^2(s)(x_1 - y), g = -g_coef y."""
    dg = np.diag(np.asarray(diag, dtype=float))

    def b(s, x):
        return -(np.cos(_tcol(s, 2)) ** 2) * x

    def sigma(s, x):
        st = np.atleast_1d(np.asarray(s, dtype=float))
        cs, sn = np.cos(st), np.sin(st)
        r = np.stack([np.stack([cs, -sn], -1), np.stack([sn, cs], -1)], -2)  # (K, 2, 2)
        rd = (r @ dg)[:, None]
        out = np.broadcast_to(rd, (st.size, x.shape[0], 2, 2)).copy()
        return out[0] if np.ndim(s) == 0 else out

    def f(s, x, y):
        return np.sin(_tcol(s, 2)) ** 2 * (x[:, :1] - y)

    def g(s, x, y):
        return -g_coef * y

    def terminal(x):
        return x[:, :1].copy()

    dmin = float(np.min(diag))
    return CoefficientSet(2, 1, b, sigma, f, g, terminal, period=2 * math.pi,
                          time_vectorized=True,
                          L1=max(1.0, float(np.sum(np.square(diag)))), L3=2.0,
                          L4=max(g_coef ** 2, 1e-12), iota=dmin ** 2,
                          name="periodic_rotation")


def constant_model(m=1, kappa=0.5, g_coef=0.2):
    """Time-homogeneous counterpart of periodic_linear (equal to its own average)."""
    eye = np.eye(m)

    def b(s, x):
        return _stacked(-kappa * x, s, x.shape)

    def sigma(s, x):
        return _stacked(eye, s, (x.shape[0], m, m))

    def f(s, x, y):
        return _stacked(x[:, :1] - y, s, y.shape)

    def g(s, x, y):
        return -g_coef * y

    def terminal(x):
        return x[:, :1].copy()

    return CoefficientSet(m, 1, b, sigma, f, g, terminal, period=None, time_homogeneous=True,
                          time_vectorized=True,
                          L1=max(kappa ** 2, float(m)), L3=2.0, L4=max(g_coef ** 2, 1e-12),
                          iota=1.0, name="constant")


register_model("periodic_linear", periodic_linear)
register_model("periodic_linear_1d", lambda **p: periodic_linear(m=1, **p))
register_model("periodic_rotation", periodic_rotation)
register_model("constant", constant_model)
