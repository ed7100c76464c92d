"""Projected Euler simulation of the reflected forward system.

One step maps ``X_i`` to ``X~ = X_i + b dt + sigma dB`` and then projects onto
closure(O); the projection residual ``dK_i = X_{i+1} - X~`` is the reflection
increment (it points along the inward normal) and ``|dK_i|`` feeds the
cumulative variation ``K_var``.
"""
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import rng
from .domain import DomainSpec, contains, is_on_boundary
from .errors import InvalidArgument, NumericalFailure

SCHEME_TAG = "projected-euler"


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise InvalidArgument(f"need t_start < t_end, got {self.t_start}, {self.t_end}")
        if int(self.n_steps) < 1:
            raise InvalidArgument(f"n_steps must be positive, got {self.n_steps}")

    @property
    def dt(self):
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def times(self):
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    def time(self, i):
        return self.t_start + i * self.dt

    @classmethod
    def for_epsilon(cls, t_start, t_end, epsilon, period, steps_per_period=64, max_dt=1e-3):
        """Uniform grid with dt <= min(epsilon * period / steps_per_period, max_dt)."""
        target = max_dt if period is None else min(epsilon * period / steps_per_period, max_dt)
        n = max(1, math.ceil((t_end - t_start) / target - 1e-9))
        return cls(float(t_start), float(t_end), int(n))


@dataclass
class PathEnsemble:
    grid: TimeGrid
    n_paths: int
    epsilon: Union[float, str]
    X: np.ndarray       # (n_paths, n_steps + 1, m)
    dK: np.ndarray      # (n_paths, n_steps, m)
    K_var: np.ndarray   # (n_paths, n_steps + 1)
    dB: np.ndarray      # (n_paths, n_steps, m)
    seed: int
    scheme_tag: str = SCHEME_TAG
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.X.shape[2]

    @property
    def dK_norm(self):
        return np.diff(self.K_var, axis=1)

    @property
    def X_T(self):
        return self.X[:, -1, :]


def _integrate(domain, drift, diffusion, grid, x0, n_paths, seed, epsilon, n_workers=1,
               path_offset=0):
    m = domain.dimension
    x0 = np.asarray(x0, dtype=float).reshape(m)
    if not bool(contains(domain, x0)):
        raise InvalidArgument(f"x0={x0.tolist()} lies outside closure(O)")
    if int(n_paths) < 1:
        raise InvalidArgument("n_paths must be positive")
    n, N, dt = int(n_paths), grid.n_steps, grid.dt
    dB = rng.brownian_block(seed, n, N, m, dt, n_workers=n_workers, path_offset=path_offset)
    X = np.empty((n, N + 1, m))
    dK = np.empty((n, N, m))
    K_var = np.empty((n, N + 1))
    X[:, 0, :] = domain.project(np.broadcast_to(x0, (n, m)).copy())
    K_var[:, 0] = 0.0
    for i in range(N):
        xi = X[:, i, :]
        sig = diffusion(i, xi)
        xt = xi + drift(i, xi) * dt + np.einsum("nij,nj->ni", sig, dB[:, i, :])
        if not np.all(np.isfinite(xt)):
            raise NumericalFailure(f"non-finite state at step {i}", step=i)
        x_next, dk, dk_norm = domain.reflect(xt)
        X[:, i + 1, :] = x_next
        dK[:, i, :] = dk
        K_var[:, i + 1] = K_var[:, i] + dk_norm
    return PathEnsemble(grid, n, epsilon, X, dK, K_var, dB, seed,
                        meta={"path_offset": int(path_offset)})


def simulate(domain: DomainSpec, c, epsilon, grid: TimeGrid, x0, n_paths, seed,
             n_workers=1, path_offset=0) -> PathEnsemble:
    """Reflected system with fast-time coefficients b(t/eps, x), sigma(t/eps, x).

    Path ``p`` of the result uses the stream of global path index
    ``path_offset + p``, so large ensembles can be produced chunk by chunk.
    """
    if not epsilon > 0:
        raise InvalidArgument(f"epsilon must be positive, got {epsilon!r}")
    eps = float(epsilon)

    def drift(i, x):
        return c.b(grid.time(i) / eps, x)

    def diffusion(i, x):
        return c.sigma(grid.time(i) / eps, x)

    return _integrate(domain, drift, diffusion, grid, x0, n_paths, seed, eps, n_workers,
                      path_offset)


def simulate_averaged(domain: DomainSpec, avg, grid: TimeGrid, x0, n_paths, seed,
                      n_workers=1, path_offset=0) -> PathEnsemble:
    """Reflected system driven by b_bar and sigma_bar."""
    return _integrate(domain, lambda i, x: avg.b_bar(x), lambda i, x: avg.sigma_bar(x),
                      grid, x0, n_paths, seed, "averaged", n_workers, path_offset)


@dataclass
class GapEstimate:
    name: str
    gap: float
    stderr: float
    mean_eps: float
    mean_bar: float


TEST_FUNCTIONALS = {
    "x": lambda x: x[:, 0],
    "x2": lambda x: x[:, 0] ** 2,
    "cos": lambda x: np.cos(x[:, 0]),
    "one": lambda x: np.ones(x.shape[0]),
}


def functional_gaps(x_eps, x_bar, functionals):
    """E[F(X^eps_T)] - E[F(X_bar_T)] with the two-sample pooled standard error."""
    out = []
    for name, F in _named(functionals):
        me, se = rng.mean_stderr(F(x_eps))
        mb, sb = rng.mean_stderr(F(x_bar))
        out.append(GapEstimate(name, float(me - mb), float(rng.pooled_stderr(se, sb)),
                               float(me), float(mb)))
    return out


def _named(functionals):
    for k, F in enumerate(functionals):
        if isinstance(F, str):
            yield F, TEST_FUNCTIONALS[F]
        elif isinstance(F, tuple):
            yield F
        else:
            yield getattr(F, "__name__", f"F{k}"), F


def weak_gap(domain, c, avg, epsilon, grid, x0, n_paths, seed, functionals):
    """Gap estimates per test functional, common seed for both ensembles."""
    eps_run = simulate(domain, c, epsilon, grid, x0, n_paths, seed)
    x_eps = eps_run.X_T.copy()
    del eps_run
    bar_run = simulate_averaged(domain, avg, grid, x0, n_paths, seed)
    return functional_gaps(x_eps, bar_run.X_T, functionals)


@dataclass
class DiagnosticsReport:
    min_monotonicity: float
    sup_moment: float
    mean_K_total: float
    reflection_fraction: float
    reference_point: list

    def to_dict(self):
        return dict(self.__dict__)


def path_diagnostics(ensemble: PathEnsemble, domain: DomainSpec, x_star=None) -> DiagnosticsReport:
    """Monotonicity of the reflection against an interior reference point,
    sup-moment, mean total variation of K and the reflecting-step fraction.

    The monotonicity term uses the exterior selection ``-dK`` of the normal
    cone: ``<X_{i+1} - x*, -dK_i> >= 0`` for any x* in closure(O).
    """
    x_star = domain.interior_point() if x_star is None else np.asarray(x_star, dtype=float)
    refl = ensemble.dK_norm > 0
    if refl.any():
        inner = -np.einsum("nim,nim->ni", ensemble.X[:, 1:, :] - x_star, ensemble.dK)
        min_mono = float(inner[refl].min())
    else:
        min_mono = 0.0
    sup2 = float(np.mean(np.max(np.sum(ensemble.X ** 2, axis=2), axis=1)))
    return DiagnosticsReport(min_mono, sup2, float(np.mean(ensemble.K_var[:, -1])),
                             float(np.mean(refl)), np.asarray(x_star).tolist())


def check_ensemble(ensemble: PathEnsemble, domain: DomainSpec, angle_tol=1e-6):
    """Assert the PathEnsemble invariants; returns a dict of failures."""
    failures = {}
    X, dK, K = ensemble.X, ensemble.dK, ensemble.K_var
    m = X.shape[2]
    if np.any(domain.phi(X.reshape(-1, m)) < -domain.boundary_tolerance):
        failures["closure"] = "state outside closure(O)"
    if np.any(K[:, 0] != 0) or np.any(np.diff(K, axis=1) < 0):
        failures["K_var"] = "K_var must start at 0 and be nondecreasing"
    norms = np.sqrt(np.sum(dK * dK, axis=2))
    if not np.allclose(norms, np.diff(K, axis=1), rtol=1e-12, atol=1e-15):
        failures["increment"] = "K_var increment differs from |dK|"
    active = norms > 0
    if active.any():
        xa = X[:, 1:, :][active]
        if not np.all(is_on_boundary(domain, xa)):
            failures["boundary_only"] = "reflection off the boundary"
        g = np.atleast_2d(domain.grad_phi(xa))
        dka = dK[active]
        cos = np.sum(g * dka, axis=1) / (np.linalg.norm(g, axis=1) * norms[active])
        angle = np.arccos(np.clip(cos, -1.0, 1.0))
        if np.any(angle > angle_tol):
            failures["normal_direction"] = f"max angle {angle.max():.3e}"
    return failures
