import numpy as np
import pytest

from reflavg.domain import (DomainSpec, contains, is_on_boundary, make_ball_domain, make_domain,
                            make_halfspace_domain, make_interval_domain, validate_domain)
from reflavg.errors import InvalidArgument


def _domains():
    return [make_ball_domain(1, 1.0), make_ball_domain(2, 1.0), make_ball_domain(3, 2.5, [1, 0, -1]),
            make_interval_domain(-1, 1), make_interval_domain(0.5, 4.0), make_halfspace_domain(2)]


def test_ball_examples(backend):
    d1 = make_ball_domain(1, 1.0)
    assert float(d1.project(np.array([2.0]))[0]) == 1.0
    d2 = make_ball_domain(2, 1.0)
    g = d2.grad_phi(np.array([1.0, 0.0]))
    assert g.tolist() == [-1.0, 0.0]
    assert np.linalg.norm(g) == 1.0
    assert d2.phi(np.array([1.0, 0.0]) + 1e-3 * g) > 0
    assert d2.project(np.array([0.3, 0.4])).tolist() == [0.3, 0.4]


def test_halfspace_examples(backend):
    d = make_halfspace_domain(2)
    assert d.project(np.array([-0.5, 2.0])).tolist() == [0.0, 2.0]
    assert d.phi(np.array([0.0, 3.0])) == 0.0
    assert bool(is_on_boundary(d, np.array([0.0, 3.0])))
    for x in ([5.0, -1.0], [0.0, 0.0], [-3.0, 7.0]):
        assert d.grad_phi(np.array(x)).tolist() == [1.0, 0.0]


def test_boundary_membership_examples():
    d = make_ball_domain(2, 1.0)
    assert bool(is_on_boundary(d, np.array([1.0, 0.0])))
    assert not bool(is_on_boundary(d, np.array([0.0, 0.0])))
    assert bool(is_on_boundary(d, np.array([1.0 - 1e-12, 0.0])))


def test_constructor_validation():
    with pytest.raises(InvalidArgument):
        make_ball_domain(0, 1.0)
    with pytest.raises(InvalidArgument):
        make_ball_domain(2, -1.0)
    with pytest.raises(InvalidArgument):
        make_interval_domain(1.0, 1.0)
    with pytest.raises(InvalidArgument):
        make_domain("torus", 2)


def test_make_domain_dispatch():
    assert make_domain("ball", 3, radius=2.0).dimension == 3
    assert make_domain("interval", lower=-2, upper=0).kind == "interval"
    assert make_domain("halfspace", 4).dimension == 4


@pytest.mark.parametrize("idx", range(6))
def test_projection_invariants(idx, backend):
    d = _domains()[idx]
    rng = np.random.default_rng(idx)
    m = d.dimension
    y = rng.normal(0, 3, (10_000, m))
    p = d.project(y)
    # idempotent, exactly
    assert np.array_equal(d.project(p), p)
    assert np.all(contains(d, p))
    # nonexpansive on random pairs
    y2 = rng.normal(0, 3, (10_000, m))
    p2 = d.project(y2)
    assert np.all(np.linalg.norm(p - p2, axis=1) <= np.linalg.norm(y - y2, axis=1) + 1e-12)
    # the residual of an exterior point is antiparallel to the inward normal
    out = d.phi(y) < -1e-9
    r = y[out] - p[out]
    g = np.atleast_2d(d.grad_phi(p[out]))
    cos = np.sum(r * g, axis=1) / (np.linalg.norm(r, axis=1) * np.linalg.norm(g, axis=1))
    assert np.all(np.arccos(np.clip(-cos, -1, 1)) <= 1e-6)
    # monotone graph of the normal cone: the exterior residual r = y - P(y)
    # satisfies <P(y) - x, r> >= 0 for every x in closure(O)
    x_in = d.project(rng.normal(0, 1, (int(out.sum()), m)))
    assert np.all(np.sum((p[out] - x_in) * r, axis=1) >= -1e-12)


@pytest.mark.parametrize("idx", range(6))
def test_builtins_pass_validator(idx):
    assert validate_domain(_domains()[idx]) == {}


def test_validator_flags_bad_user_domain():
    # unit disk with a gradient that is twice too long and a leaky projection
    bad = DomainSpec(2, lambda x: 0.5 * (1 - np.sum(np.asarray(x) ** 2, axis=-1)),
                     lambda x: -2.0 * np.asarray(x),
                     lambda x: np.asarray(x) * 1.0)
    fails = validate_domain(bad)
    assert "closure" in fails


def test_user_domain_reflect_falls_back_to_project():
    ball = make_ball_domain(2, 1.0)
    user = DomainSpec(2, ball.phi, ball.grad_phi, ball.project)
    x, dk, nrm = user.reflect(np.array([[3.0, 4.0]]))
    np.testing.assert_allclose(x, [[0.6, 0.8]], atol=1e-15)
    np.testing.assert_allclose(nrm, [4.0], atol=1e-14)
