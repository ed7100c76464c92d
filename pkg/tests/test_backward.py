import math

import numpy as np
import pytest

from conftest import constant_set
from reflavg.backward import (RegressionConfig, basis_features, conditional_expectation,
                              initial_value_convergence, martingale_check, solve)
from reflavg.coefficients import AveragedCoefficients, make_model
from reflavg.domain import make_ball_domain, make_interval_domain
from reflavg.errors import InvalidArgument
from reflavg.forward import TimeGrid, simulate, simulate_averaged
from reflavg.potentials import (abs_potential, box_indicator, positive_part_potential,
                                zero_potential)

E_INV = 0.36787944117144233
EXPLICIT_DECAY_1000 = 0.36769542477096373  # (1 - 1e-3) ** 1000

ZERO = zero_potential(1)


def still(c, n_steps=1000, n_paths=8, x0=(0.0,)):
    """Deterministic ensemble (sigma = 0 is folded into the coefficient set)."""
    dom = make_interval_domain(-1, 1)
    return simulate(dom, c, 1.0, TimeGrid(0, 1, n_steps), list(x0), n_paths, 0), dom


def frozen(**kw):
    return constant_set(m=1, sigma=lambda s, x: np.zeros((x.shape[0], 1, 1)), **kw)


def test_regression_config_guards():
    with pytest.raises(InvalidArgument):
        RegressionConfig(degree=7)
    with pytest.raises(InvalidArgument):
        RegressionConfig(ridge=-1.0)
    with pytest.raises(InvalidArgument):
        RegressionConfig(basis="hermite")


def test_basis_features_columns():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    f = basis_features(x, 2, np.array([True, False]))
    # x1, x2, x1^2, x1 x2, x2^2, indicator
    assert f.tolist() == [[1, 2, 1, 2, 4, 1], [3, -1, 9, -3, 1, 0]]
    assert basis_features(x, 0).shape == (2, 0)


def test_conditional_expectation_exact_cases():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(500, 1))
    feats = basis_features(x, 2)
    const = np.full((500, 1), 0.7)
    assert np.array_equal(conditional_expectation(feats, const, 1e-10), const)
    target = 1.0 + 2.0 * x - 0.5 * x ** 2
    np.testing.assert_allclose(conditional_expectation(feats, target, 0.0), target, atol=1e-10)
    # collinear features route through the least-squares fallback
    dup = np.column_stack([x[:, 0], x[:, 0]])
    np.testing.assert_allclose(conditional_expectation(dup, 3 * x, 0.0), 3 * x, atol=1e-10)


def test_constant_driver_exact():
    c = frozen(f=lambda s, x, y: np.full_like(y, 0.3), terminal=lambda x: np.full((x.shape[0], 1), 2.0))
    ens, dom = still(c, 100)
    sol = solve(ens, c, ZERO, ZERO, domain=dom)
    assert abs(sol.Y_start[0] - (2.0 + 0.3)) <= 1e-12
    assert np.all(sol.dU == 0) and np.all(sol.dV == 0)


def test_linear_driver_geometric_product():
    c = frozen(f=lambda s, x, y: -y, terminal=lambda x: np.ones((x.shape[0], 1)))
    ens, dom = still(c, 1000)
    y0 = solve(ens, c, ZERO, ZERO, domain=dom).Y_start[0]
    assert abs(y0 - EXPLICIT_DECAY_1000) <= 1e-12
    assert abs(y0 - E_INV) <= 1e-3


def test_indicator_hand_recursion():
    # three steps: predictor C + f dt = 0 - dt < 0 is projected back to 0 and
    # U absorbs the whole push
    c = frozen(f=lambda s, x, y: -np.ones_like(y))
    ens, dom = still(c, 3, n_paths=4)
    dt = ens.grid.dt
    sol = solve(ens, c, box_indicator(1, 0.0, None), ZERO, domain=dom)
    assert np.all(sol.Y == 0.0)
    assert np.all(sol.dU == -dt)
    assert np.all(sol.dV == 0.0)
    np.testing.assert_array_equal(sol.U_cum[0, :, 0], [-3 * dt, -2 * dt, -dt, 0.0])


def test_terminal_bitwise_and_one_step_identity():
    c = make_model("periodic_linear_1d")
    dom = make_interval_domain(-1, 1)
    ens = simulate(dom, c, 0.1, TimeGrid(0, 1, 300), [0.5], 3000, 1)
    pphi, ppsi = positive_part_potential(1, 1.0), positive_part_potential(1, 0.5)
    sol = solve(ens, c, pphi, ppsi, domain=dom)
    assert np.array_equal(sol.Y[:, -1], c.terminal(ens.X_T))
    # Y_i + dU_i + dV_i = C_i + f dt + g d|K|
    dt, dk = ens.grid.dt, ens.dK_norm
    for i in (0, 57, 299):
        xi, ci = ens.X[:, i], sol.C[:, i]
        v = ci + c.f(ens.grid.time(i) / 0.1, xi, ci) * dt
        hit = dk[:, i] > 0
        v[hit] += c.g(ens.grid.time(i), ens.X[hit, i + 1], ci[hit]) * dk[hit, i, None]
        np.testing.assert_allclose(sol.Y[:, i] + sol.dU[:, i] + sol.dV[:, i], v, atol=1e-13)
    # V moves only on reflecting steps
    assert np.all(sol.dV[:, :, 0][dk == 0] == 0)
    # subgradient inequality at the resolvent output, both potentials
    vgrid = np.linspace(-3, 3, 61)
    for part, pot, w in ((sol.dU, pphi, np.full_like(dk, dt)), (sol.dV, ppsi, dk)):
        yi = sol.Y[:, :-1, 0].ravel()
        inc = part[:, :, 0].ravel()
        wt = w.ravel()
        lhs = inc[:, None] * (vgrid[None, :] - yi[:, None]) + wt[:, None] * pot.eval(yi[:, None])[:, None]
        rhs = wt[:, None] * pot.eval(vgrid[:, None])[None, :]
        assert np.all(lhs <= rhs + 1e-9)
    assert martingale_check(sol, ens) <= 6


def test_zero_potentials_reduce_to_plain_bsde():
    c = make_model("periodic_linear_1d")
    dom = make_interval_domain(-1, 1)
    ens = simulate(dom, c, 0.5, TimeGrid(0, 0.5, 100), [0.0], 500, 3)
    sol = solve(ens, c, ZERO, ZERO, domain=dom)
    assert np.all(sol.dU == 0) and np.all(sol.dV == 0)


def test_martingale_check_examples():
    c = frozen(f=lambda s, x, y: -y, terminal=lambda x: x.copy())
    ens, dom = still(c, 20, x0=(0.3,))
    assert martingale_check(solve(ens, c, ZERO, ZERO, domain=dom)) == 0.0
    # linear Gaussian: Y_T = X_T, no reflection on a wide ball
    c = constant_set(m=1, terminal=lambda x: x.copy())
    dom = make_ball_domain(1, 50.0)
    ens = simulate(dom, c, 1.0, TimeGrid(0, 1, 50), [0.0], 4000, 2)
    sol = solve(ens, c, ZERO, ZERO, RegressionConfig(degree=1), domain=dom)
    assert martingale_check(sol, ens) <= 6


def test_z_estimate_linear_gaussian():
    c = constant_set(m=1, terminal=lambda x: x.copy())
    dom = make_ball_domain(1, 50.0)
    ens = simulate(dom, c, 1.0, TimeGrid(0, 1, 20), [0.0], 20_000, 5)
    sol = solve(ens, c, ZERO, ZERO, RegressionConfig(degree=1), domain=dom, estimate_z=True)
    assert abs(sol.Z_est[:, 0].mean() - 1.0) < 0.05


def test_driver_mode_validation():
    c = make_model("periodic_linear_1d")
    dom = make_interval_domain(-1, 1)
    grid = TimeGrid(0, 0.1, 10)
    ens = simulate(dom, c, 0.5, grid, [0.0], 10, 0)
    with pytest.raises(InvalidArgument):
        solve(ens, c, ZERO, ZERO, driver_mode="averaged")
    with pytest.raises(InvalidArgument):
        solve(ens, c, ZERO, ZERO, driver_mode="fast")
    bar = simulate_averaged(dom, AveragedCoefficients(c), grid, [0.0], 10, 0)
    with pytest.raises(InvalidArgument):
        solve(bar, c, ZERO, ZERO, driver_mode="epsilon")


def test_moment_diagnostics_present():
    c = make_model("periodic_linear_1d")
    dom = make_interval_domain(-1, 1)
    ens = simulate(dom, c, 0.5, TimeGrid(0, 0.5, 100), [0.9], 500, 3)
    sol = solve(ens, c, abs_potential(1), positive_part_potential(1), domain=dom)
    for k in ("sup_Y2", "U_energy", "V_energy", "martingale_stat"):
        assert math.isfinite(sol.diagnostics[k])
    assert sol.Y_start_stderr[0] > 0


def test_initial_value_convergence_constant_model_exact():
    c = make_model("constant")
    dom = make_interval_domain(-1, 1)
    rows = initial_value_convergence(dom, c, AveragedCoefficients(c), positive_part_potential(1),
                                     positive_part_potential(1, 0.5), 0.0, [0.5], 0.5,
                                     [1.0, 0.1], 400, seed=4, max_dt=5e-3)
    assert [r.error for r in rows] == [0.0, 0.0]
    assert all(r.stderr > 0 for r in rows)
