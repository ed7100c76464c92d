import math

import numpy as np
import pytest

from conftest import constant_set
from reflavg.coefficients import AveragedCoefficients, make_model
from reflavg.domain import make_ball_domain, make_halfspace_domain, make_interval_domain
from reflavg.errors import InvalidArgument, NumericalFailure
from reflavg.forward import (TimeGrid, check_ensemble, functional_gaps, path_diagnostics,
                             simulate, simulate_averaged, weak_gap)
from reflavg.pathio import read_path_dump, write_path_dump

HALF_NORMAL_MEAN = 0.7978845608028654  # sqrt(2 / pi)


def bench():
    return make_model("periodic_linear_1d"), make_interval_domain(-1, 1)


def test_time_grid():
    g = TimeGrid(0.0, 1.0, 4)
    assert g.dt == 0.25 and g.times.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(InvalidArgument):
        TimeGrid(1.0, 1.0, 3)
    with pytest.raises(InvalidArgument):
        TimeGrid(0.0, 1.0, 0)
    assert TimeGrid.for_epsilon(0, 1, 1.0, 2 * math.pi).n_steps == 1000
    assert TimeGrid.for_epsilon(0, 1, 0.01, 2 * math.pi).dt <= 0.01 * 2 * math.pi / 64


def test_no_motion():
    c = constant_set(m=2, sigma=lambda s, x: np.zeros((x.shape[0], 2, 2)))
    dom = make_ball_domain(2, 1.0)
    ens = simulate(dom, c, 1.0, TimeGrid(0, 1, 50), [0.2, -0.3], 20, seed=1)
    assert np.all(ens.X == np.array([0.2, -0.3]))
    assert np.all(ens.K_var == 0)


def test_bad_inputs():
    c = constant_set(m=1)
    dom = make_interval_domain(-1, 1)
    with pytest.raises(InvalidArgument):
        simulate(dom, c, 1.0, TimeGrid(0, 1, 5), [2.0], 5, 0)
    with pytest.raises(InvalidArgument):
        simulate(dom, c, 0.0, TimeGrid(0, 1, 5), [0.0], 5, 0)
    blow = constant_set(m=1, drift=lambda s, x: np.full_like(x, np.inf))
    with pytest.raises(NumericalFailure) as info:
        simulate(make_halfspace_domain(1), blow, 1.0, TimeGrid(0, 1, 5), [0.0], 3, 0)
    assert info.value.step == 0


def test_halfspace_half_normal(backend):
    c = constant_set(m=1)
    ens = simulate(make_halfspace_domain(1), c, 1.0, TimeGrid(0, 1, 1000), [0.0], 20_000, 3)
    xt = np.abs(ens.X_T[:, 0])
    se = xt.std(ddof=1) / math.sqrt(xt.size)
    assert abs(xt.mean() - HALF_NORMAL_MEAN) <= 3 * se + 0.02
    assert check_ensemble(ens, make_halfspace_domain(1)) == {}
    assert path_diagnostics(ens, make_halfspace_domain(1)).reflection_fraction > 0


def test_interior_only():
    dom = make_ball_domain(2, 10.0)
    ens = simulate(dom, constant_set(m=2), 1.0, TimeGrid(0, 0.1, 100), [0, 0], 5000, 2)
    assert np.max(np.linalg.norm(ens.X, axis=2)) < 10
    assert np.all(ens.K_var == 0)
    diag = path_diagnostics(ens, dom)
    assert diag.min_monotonicity == 0.0 and diag.mean_K_total == 0.0


def test_averaged_equals_constant_bitwise():
    c = constant_set(m=2)
    dom = make_ball_domain(2, 1.0)
    grid = TimeGrid(0, 1, 200)
    a = simulate(dom, c, 0.3, grid, [0.1, 0.0], 300, 9)
    b = simulate_averaged(dom, AveragedCoefficients(c), grid, [0.1, 0.0], 300, 9)
    assert b.epsilon == "averaged"
    for k in ("X", "dK", "K_var", "dB"):
        assert np.array_equal(getattr(a, k), getattr(b, k))


def test_averaged_periodic_drift_mean():
    v = np.array([1.0, -0.5])
    c = constant_set(m=2, drift=lambda s, x: (1 + math.sin(s)) * np.broadcast_to(v, x.shape),
                     sigma=lambda s, x: np.broadcast_to(0.2 * np.eye(2), (x.shape[0], 2, 2)),
                     time_homogeneous=False, period=2 * math.pi, iota=0.04)
    ens = simulate_averaged(make_ball_domain(2, 10.0), AveragedCoefficients(c),
                            TimeGrid(0, 1, 50), [0, 0], 4000, 5)
    assert np.all(ens.K_var == 0)
    mean = ens.X_T.mean(axis=0)
    se = ens.X_T.std(axis=0, ddof=1) / math.sqrt(4000)
    assert np.all(np.abs(mean - v) <= 3 * se + 1e-12)


def test_averaged_diagonal_variances():
    c = constant_set(m=2, sigma=lambda s, x: np.broadcast_to(np.diag([2.0, 3.0]), (x.shape[0], 2, 2)),
                     time_homogeneous=False, period=1.0, iota=4.0)
    T, n = 0.5, 6000
    ens = simulate_averaged(make_ball_domain(2, 100.0), AveragedCoefficients(c),
                            TimeGrid(0, T, 20), [0, 0], n, 6)
    var = ens.X_T.var(axis=0, ddof=1)
    expected = np.array([4 * T, 9 * T])
    band = 3 * expected * math.sqrt(2 / (n - 1))
    assert np.all(np.abs(var - expected) <= band)


@pytest.mark.parametrize("workers", [2, 4])
def test_worker_count_determinism(workers):
    c, dom = bench()
    grid = TimeGrid(0, 0.5, 100)
    a = simulate(dom, c, 0.1, grid, [0.5], 200, 11, n_workers=1)
    b = simulate(dom, c, 0.1, grid, [0.5], 200, 11, n_workers=workers)
    for k in ("X", "dK", "K_var", "dB"):
        assert np.array_equal(getattr(a, k), getattr(b, k))


def test_path_offset_chunks_reassemble():
    c, dom = bench()
    grid = TimeGrid(0, 0.2, 50)
    full = simulate(dom, c, 0.1, grid, [0.5], 10, 3)
    tail = simulate(dom, c, 0.1, grid, [0.5], 4, 3, path_offset=6)
    assert np.array_equal(full.X[6:], tail.X)


@pytest.mark.parametrize("dom", [make_ball_domain(2, 1.0), make_interval_domain(-1, 1),
                                 make_halfspace_domain(3)])
def test_invariants_hold(dom, backend):
    m = dom.dimension
    c = make_model("periodic_linear", m=m)
    ens = simulate(dom, c, 0.1, TimeGrid(0, 1, 400), np.zeros(m), 2000, 4)
    assert check_ensemble(ens, dom) == {}
    diag = path_diagnostics(ens, dom)
    assert diag.min_monotonicity >= -1e-12
    assert diag.reflection_fraction > 0


def test_check_ensemble_catches_corruption():
    c, dom = bench()
    ens = simulate(dom, c, 1.0, TimeGrid(0, 1, 200), [0.9], 200, 1)
    ens.dK[ens.dK_norm > 0] *= -1.0
    assert "normal_direction" in check_ensemble(ens, dom)
    ens.X[0, 3, 0] = 2.0
    assert "closure" in check_ensemble(ens, dom)


def test_gap_examples():
    c = constant_set(m=1)
    dom = make_interval_domain(-1, 1)
    avg = AveragedCoefficients(c)
    gaps = weak_gap(dom, c, avg, 0.5, TimeGrid(0, 1, 200), [0.0], 500, 2, ["x", "x2", "cos", "one"])
    assert [g.gap for g in gaps] == [0.0, 0.0, 0.0, 0.0]
    c, dom = bench()
    x = np.random.default_rng(0).uniform(-1, 1, (100, 1))
    (one,) = functional_gaps(x, x[::-1] * 0.5, ["one"])
    assert one.gap == 0.0 and one.stderr == 0.0


def test_step_refinement_weak_order():
    c, dom = bench()
    avg = AveragedCoefficients(c)
    out = []
    for n in (250, 500):
        ens = simulate_averaged(dom, avg, TimeGrid(0, 1, n), [0.5], 8000, 12)
        out.append(ens.X_T[:, 0])
    diff = out[0].mean() - out[1].mean()
    se = math.sqrt(out[0].var(ddof=1) / 8000 + out[1].var(ddof=1) / 8000)
    assert abs(diff) <= 3 * se


def test_path_dump_round_trip(tmp_path):
    c, dom = bench()
    ens = simulate(dom, c, 0.5, TimeGrid(0, 0.25, 40), [0.2], 30, 8)
    f = tmp_path / "paths.bin"
    write_path_dump(f, ens)
    header, X, dK, K = read_path_dump(f)
    assert header == {"m": 1, "n_paths": 30, "n_steps": 40, "dt": ens.grid.dt}
    assert np.array_equal(X, ens.X) and np.array_equal(dK, ens.dK) and np.array_equal(K, ens.K_var)
    f.write_bytes(f.read_bytes()[:-8])
    with pytest.raises(InvalidArgument):
        read_path_dump(f)
