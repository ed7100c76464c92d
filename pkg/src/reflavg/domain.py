"""Convex domains O = {phi > 0} with inward unit normal on the boundary.

All maps are vectorized over a leading axis: a point is an array of shape
(m,), a batch is (n, m).
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import InvalidArgument


@dataclass(frozen=True)
class DomainSpec:
    dimension: int
    phi: Callable
    grad_phi: Callable
    project: Callable
    boundary_tolerance: float = 1e-10
    kind: str = "user"
    params: dict = field(default_factory=dict)

    def reflect(self, xt):
        """Project a batch and return ``(x, dk, |dk|)`` with ``dk = x - xt``."""
        xt = np.asarray(xt, dtype=float)
        if self.kind == "ball":
            return kernels.reflect_ball(xt, self.params["center"], self.params["radius"])
        if self.kind in ("interval", "halfspace"):
            return kernels.reflect_box(xt, self.params["lower"], self.params["upper"])
        x = np.asarray(self.project(xt), dtype=float)
        dk = x - xt
        return x, dk, np.sqrt(np.sum(dk * dk, axis=-1))

    def interior_point(self):
        """A point strictly inside O, used as the reference for monotonicity checks."""
        if "center" in self.params:
            return np.asarray(self.params["center"], dtype=float).copy()
        if self.kind == "halfspace":
            e = np.zeros(self.dimension)
            e[0] = 1.0
            return e
        return self.params.get("interior", np.zeros(self.dimension))


def _check_dim(m):
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise InvalidArgument(f"dimension must be a positive integer, got {m!r}")
    return int(m)


def make_ball_domain(m, radius, center=None) -> DomainSpec:
    """Closed ball of the given radius; phi = (r^2 - |x-c|^2) / (2r)."""
    m = _check_dim(m)
    if not radius > 0:
        raise InvalidArgument(f"radius must be positive, got {radius!r}")
    radius = float(radius)
    c = np.zeros(m) if center is None else np.asarray(center, dtype=float).reshape(m)

    def phi(x):
        rel = np.asarray(x, dtype=float) - c
        return (radius * radius - np.sum(rel * rel, axis=-1)) / (2.0 * radius)

    def grad_phi(x):
        return -(np.asarray(x, dtype=float) - c) / radius

    def project(x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_2d(x)
        out = kernels.reflect_ball(flat, c, radius)[0]
        return out.reshape(x.shape)

    return DomainSpec(m, phi, grad_phi, project, kind="ball",
                      params={"radius": radius, "center": c})


def make_interval_domain(lower, upper) -> DomainSpec:
    """The closed interval [lower, upper] in R^1."""
    lower, upper = float(lower), float(upper)
    if not upper > lower:
        raise InvalidArgument(f"need lower < upper, got [{lower}, {upper}]")
    width = upper - lower

    def phi(x):
        x = np.asarray(x, dtype=float)[..., 0]
        return (x - lower) * (upper - x) / width

    def grad_phi(x):
        x = np.asarray(x, dtype=float)
        return (lower + upper - 2.0 * x) / width

    def project(x):
        return np.clip(np.asarray(x, dtype=float), lower, upper)

    return DomainSpec(1, phi, grad_phi, project, kind="interval",
                      params={"lower": np.array([lower]), "upper": np.array([upper]),
                              "center": np.array([0.5 * (lower + upper)])})


def make_halfspace_domain(m) -> DomainSpec:
    """O = {x_1 > 0}; unbounded, meant for analytic reflection checks."""
    m = _check_dim(m)
    lower = np.full(m, -np.inf)
    lower[0] = 0.0
    upper = np.full(m, np.inf)
    e1 = np.zeros(m)
    e1[0] = 1.0

    def phi(x):
        return np.asarray(x, dtype=float)[..., 0] * 1.0

    def grad_phi(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(e1, x.shape).copy()

    def project(x):
        x = np.array(x, dtype=float)
        x[..., 0] = np.maximum(x[..., 0], 0.0)
        return x

    return DomainSpec(m, phi, grad_phi, project, kind="halfspace",
                      params={"lower": lower, "upper": upper})


def make_domain(kind, m=None, **params) -> DomainSpec:
    """Build a domain from a config entry (``kind`` in ball/interval/halfspace)."""
    if kind == "ball":
        return make_ball_domain(m if m is not None else params.pop("dimension", 1),
                                params.get("radius", 1.0), params.get("center"))
    if kind == "interval":
        return make_interval_domain(params.get("lower", -1.0), params.get("upper", 1.0))
    if kind == "halfspace":
        return make_halfspace_domain(m if m is not None else params.get("dimension", 1))
    raise InvalidArgument(f"unknown domain kind {kind!r}")


def is_on_boundary(d: DomainSpec, x):
    return np.abs(d.phi(x)) <= d.boundary_tolerance


def contains(d: DomainSpec, x, tol=None):
    tol = d.boundary_tolerance if tol is None else tol
    return d.phi(x) >= -tol


def validate_domain(d: DomainSpec, n_samples=2000, seed=0, scale=2.0):
    """Sample the DomainSpec invariants; returns a dict of failures (empty if ok).

    Intended for user-supplied ``(phi, grad_phi, project)`` triples.
    """
    rng = np.random.default_rng(seed)
    m = d.dimension
    y = rng.uniform(-scale, scale, size=(n_samples, m))
    if d.kind in ("ball",):
        y = y * d.params["radius"] + d.params["center"]
    p = d.project(y)
    failures = {}
    if not np.array_equal(d.project(p), p):
        failures["idempotent"] = "project(project(y)) != project(y)"
    if np.any(d.phi(p) < -d.boundary_tolerance):
        failures["closure"] = "project left closure(O)"
    inside = d.phi(y) >= 0
    if not np.array_equal(p[inside], y[inside]):
        failures["identity_on_closure"] = "project moved an interior point"
    on = is_on_boundary(d, p)
    if on.any():
        g = np.atleast_2d(d.grad_phi(p[on]))
        norms = np.linalg.norm(g, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-8:
            failures["unit_normal"] = f"max | |grad phi| - 1 | = {np.max(np.abs(norms - 1.0)):.3e}"
        if np.any(d.phi(p[on] + 1e-6 * g) <= 0):
            failures["inward_normal"] = "grad phi does not point into O"
    return failures
