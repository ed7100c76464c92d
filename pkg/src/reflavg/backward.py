"""Backward sweep for the stochastic variational inequality along a PathEnsemble.

Per step ``i = n-1, ..., 0``::

    C_i = E_i[Y_{i+1}]                        (cross-path regression on X_i)
    v_i = C_i + f(., X_i, C_i) dt + g(t_i, X_{i+1}, C_i) d|K|_i
    (Y_i, dU_i, dV_i) = resolvent of v_i with weights (dt, d|K|_i)

so that ``Y_i + dU_i + dV_i = v_i`` holds step by step.
"""
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .domain import is_on_boundary
from .errors import InvalidArgument, NumericalFailure
from .forward import TimeGrid, simulate, simulate_averaged
from .potentials import composite_resolvent

MAX_DEGREE = 6


@dataclass(frozen=True)
class RegressionConfig:
    basis: str = "polynomial"
    degree: int = 2
    ridge: float = 1e-10
    include_boundary_indicator: bool = True

    def __post_init__(self):
        if self.basis != "polynomial":
            raise InvalidArgument(f"unsupported basis {self.basis!r}")
        if not 0 <= self.degree <= MAX_DEGREE:
            raise InvalidArgument(f"degree must lie in [0, {MAX_DEGREE}], got {self.degree}")
        if self.ridge < 0:
            raise InvalidArgument("ridge must be nonnegative")


def basis_features(x, degree, boundary=None):
    """Monomials of total degree 1..degree in the columns of x (no constant),
    plus the boundary indicator when given."""
    n, m = x.shape
    cols = []
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(m), deg):
            cols.append(np.prod(x[:, combo], axis=1))
    if boundary is not None:
        cols.append(boundary.astype(float))
    if not cols:
        return np.empty((n, 0))
    return np.column_stack(cols)


def conditional_expectation(features, target, ridge, step=None):
    """Least-squares projection of ``target`` (n, k) on span{1, features}.

    The intercept is handled by centering so it is never shrunk; a constant
    target comes back bitwise unchanged.
    """
    if np.all(target == target[0]):
        return np.broadcast_to(target[0], target.shape).copy()
    mean = target.mean(axis=0)
    if features.shape[1] == 0:
        return np.broadcast_to(mean, target.shape).copy()
    fc = features - features.mean(axis=0)
    live = np.any(fc != 0, axis=0)
    if not live.any():
        return np.broadcast_to(mean, target.shape).copy()
    fc = fc[:, live]
    k = fc.shape[1]
    rhs = target - mean
    gram = fc.T @ fc + ridge * np.eye(k)
    try:
        chol = np.linalg.cholesky(gram)
        ok = np.linalg.cond(chol) < 1e7
    except np.linalg.LinAlgError:
        ok = False
    if ok:
        coef = np.linalg.solve(gram, fc.T @ rhs)
    else:
        # ill-conditioned normal equations: fall back to an SVD solve
        a = np.vstack([fc, math.sqrt(ridge) * np.eye(k)]) if ridge > 0 else fc
        if ridge > 0:
            rhs = np.vstack([rhs, np.zeros((k, target.shape[1]))])
        coef, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    fitted = mean + fc @ coef
    if not np.all(np.isfinite(fitted)):
        raise NumericalFailure(f"regression failed at step {step}", step=step)
    return fitted


@dataclass
class BackwardSolution:
    Y: np.ndarray            # (n_paths, n_steps + 1, d)
    dU: np.ndarray           # (n_paths, n_steps, d)
    dV: np.ndarray           # (n_paths, n_steps, d)
    C: np.ndarray            # (n_paths, n_steps, d) conditional expectations
    Y_start: np.ndarray      # (d,)
    Y_start_stderr: np.ndarray
    martingale_residual: float
    Z_est: Optional[np.ndarray] = None
    driver_mode: str = "epsilon"
    diagnostics: dict = field(default_factory=dict)

    @property
    def U_cum(self):
        """Backward cumulative sums sum_{j >= i} dU_j, shape (n, n_steps + 1, d)."""
        return _reverse_cumsum(self.dU)

    @property
    def V_cum(self):
        return _reverse_cumsum(self.dV)


def _reverse_cumsum(a):
    out = np.zeros((a.shape[0], a.shape[1] + 1) + a.shape[2:])
    out[:, :-1] = np.cumsum(a[:, ::-1], axis=1)[:, ::-1]
    return out


def solve(ensemble, c, p_phi, p_psi, reg=None, driver_mode="epsilon", avg=None, domain=None,
          estimate_z=False) -> BackwardSolution:
    """Backward LSMC sweep with the composite resolvent for the multivalued terms.

    ``driver_mode="epsilon"`` evaluates f at ``t_i / eps``; ``"averaged"`` uses
    ``avg.f_bar``.  g is always evaluated at the slow time ``t_i`` and only on
    paths that reflected during the step.
    """
    reg = reg or RegressionConfig()
    if driver_mode not in ("epsilon", "averaged"):
        raise InvalidArgument(f"driver_mode must be 'epsilon' or 'averaged', got {driver_mode!r}")
    if driver_mode == "averaged" and avg is None:
        raise InvalidArgument("driver_mode='averaged' needs averaged coefficients")
    if driver_mode == "epsilon" and isinstance(ensemble.epsilon, str):
        raise InvalidArgument("driver_mode='epsilon' needs an ensemble with numeric epsilon")
    grid = ensemble.grid
    X, n = ensemble.X, ensemble.n_paths
    N, dt, d = grid.n_steps, grid.dt, c.d
    dk_norm = ensemble.dK_norm

    Y = np.empty((n, N + 1, d))
    dU = np.empty((n, N, d))
    dV = np.empty((n, N, d))
    C = np.empty((n, N, d))
    Z = np.empty((n, N, d, ensemble.m)) if estimate_z else None
    mart_stat = np.zeros(N)
    mart_sum = np.zeros((n, d))

    Y[:, N, :] = c.terminal(X[:, N, :])
    if not np.all(np.isfinite(Y[:, N, :])):
        raise NumericalFailure("non-finite terminal value", step=N)
    for i in range(N - 1, -1, -1):
        xi = X[:, i, :]
        target = Y[:, i + 1, :]
        if np.all(xi == xi[0]):
            ci = np.broadcast_to(rng.exact_mean(target), target.shape).copy()
            feats = None
        else:
            bnd = is_on_boundary(domain, xi) if (domain is not None and
                                                 reg.include_boundary_indicator) else None
            feats = basis_features(xi, reg.degree, bnd)
            ci = conditional_expectation(feats, target, reg.ridge, step=i)
        C[:, i, :] = ci
        ti = grid.time(i)
        if driver_mode == "epsilon":
            drv = np.asarray(c.f(ti / ensemble.epsilon, xi, ci), dtype=float)
        else:
            drv = np.asarray(avg.f_bar(xi, ci), dtype=float)
        v = ci + drv * dt
        dki = dk_norm[:, i]
        hit = dki > 0
        if hit.any():
            gv = np.asarray(c.g(ti, X[hit, i + 1, :], ci[hit]), dtype=float)
            v[hit] += gv * dki[hit, None]
        y, u, w = composite_resolvent(p_phi, p_psi, v, dt, dki)
        if not np.all(np.isfinite(y)):
            raise NumericalFailure(f"non-finite Y at step {i}", step=i)
        Y[:, i, :], dU[:, i, :], dV[:, i, :] = y, u, w
        if estimate_z:
            prod = (target[:, :, None] * ensemble.dB[:, i, None, :]).reshape(n, -1)
            if feats is None:
                zi = np.broadcast_to(prod.mean(axis=0), prod.shape)
            else:
                zi = conditional_expectation(feats, prod, reg.ridge, step=i)
            Z[:, i] = zi.reshape(n, d, ensemble.m) / dt
        mart_stat[i] = _martingale_stat(target - ci)
        mart_sum += target - ci

    y0 = Y[:, 0, :]
    y_start = np.atleast_1d(rng.exact_mean(y0))
    # Y_0 plus the summed one-step martingale increments equals the pathwise
    # backward sum Phi(X_T) + sum_i (Y_i - C_i); its spread is the MC error
    _, se = rng.mean_stderr(y0 + mart_sum)
    sol = BackwardSolution(Y, dU, dV, C, y_start, np.atleast_1d(se),
                           float(mart_stat.max()) if N else 0.0, Z, driver_mode)
    sol.diagnostics = _moment_diagnostics(sol, dt, dk_norm)
    return sol


def _martingale_stat(incr):
    n = incr.shape[0]
    mean = incr.mean(axis=0)
    if n < 2:
        return 0.0
    se = incr.std(axis=0, ddof=1) / math.sqrt(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(se > 0, np.abs(mean) / np.where(se > 0, se, 1.0),
                        np.where(np.abs(mean) <= 1e-14, 0.0, np.inf))
    return float(np.max(stat))


def martingale_check(sol: BackwardSolution, ensemble=None):
    """max over steps of |mean(Y_{i+1} - C_i)| / stderr; values above 4 flag regression bias."""
    N = sol.C.shape[1]
    if N == 0:
        return 0.0
    return max(_martingale_stat(sol.Y[:, i + 1, :] - sol.C[:, i, :]) for i in range(N))


def _moment_diagnostics(sol, dt, dk_norm):
    sup_y2 = float(np.mean(np.max(np.sum(sol.Y ** 2, axis=2), axis=1)))
    u_energy = float(np.mean(np.sum(np.sum(sol.dU ** 2, axis=2), axis=1) / dt))
    hit = dk_norm > 0
    v2 = np.sum(sol.dV ** 2, axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(hit, v2 / np.where(hit, dk_norm, 1.0), 0.0)
    return {"sup_Y2": sup_y2, "U_energy": u_energy,
            "V_energy": float(np.mean(np.sum(ratio, axis=1))),
            "martingale_stat": sol.martingale_residual}


@dataclass
class ConvergenceRow:
    epsilon: float
    n_steps: int
    Y_eps: float
    Y_bar: float
    error: float
    stderr: float


def initial_value_convergence(domain, c, avg, p_phi, p_psi, t, x, T, epsilons, n_paths, reg=None,
                              seed=0, grid=None, steps_per_period=64, max_dt=1e-3):
    """Rows {eps, Y^eps_start, Y_bar_start, |difference|, pooled stderr} with common seeds.

    ``grid`` fixes one TimeGrid for every epsilon; otherwise each epsilon gets
    ``TimeGrid.for_epsilon``.  The averaged run is shared between epsilons that
    land on the same grid.
    """
    reg = reg or RegressionConfig()
    rows = []
    bar_cache = {}
    for eps in epsilons:
        g = grid or TimeGrid.for_epsilon(t, T, eps, c.period, steps_per_period, max_dt)
        e_run = simulate(domain, c, eps, g, x, n_paths, seed)
        e_sol = solve(e_run, c, p_phi, p_psi, reg, "epsilon", domain=domain)
        del e_run
        key = (g.t_start, g.t_end, g.n_steps)
        if key not in bar_cache:
            b_run = simulate_averaged(domain, avg, g, x, n_paths, seed)
            b_sol = solve(b_run, c, p_phi, p_psi, reg, "averaged", avg=avg, domain=domain)
            bar_cache[key] = (b_sol.Y_start.copy(), b_sol.Y_start_stderr.copy())
            del b_run, b_sol
        yb, sb = bar_cache[key]
        err = float(np.max(np.abs(e_sol.Y_start - yb)))
        se = float(np.max(rng.pooled_stderr(e_sol.Y_start_stderr, sb)))
        rows.append(ConvergenceRow(float(eps), g.n_steps, float(e_sol.Y_start[0]),
                                   float(yb[0]), err, se))
        del e_sol
    return rows
