import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrkriging import ccsa
from hrkriging.errors import InvalidArgumentError


def _ball(limit=1.0):
    return lambda x: (float(x @ x) - limit, 2 * x)


def _quad(center, scale=None):
    center = np.asarray(center, dtype=float)
    scale = np.ones_like(center) if scale is None else np.asarray(scale, dtype=float)
    return lambda x: (float(np.sum(scale * (x - center) ** 2)), 2 * scale * (x - center))


def test_projection_onto_ball():
    p = ccsa.ConstrainedProblem(_quad([2, 2]), np.array([0.1, 0.1]), np.zeros(2), np.full(2, 3.0), [_ball()])
    res = ccsa.minimize(p, budget=500)
    np.testing.assert_allclose(res.x, [2**-0.5, 2**-0.5], atol=1e-5)
    assert res.f == pytest.approx(2 * (2 - 2**-0.5) ** 2, abs=1e-5)
    assert res.f == pytest.approx(3.343, abs=1e-3)


def test_interior_optimum():
    p = ccsa.ConstrainedProblem(_quad([0.2, 0.3]), np.array([0.6, 0.1]), np.zeros(2), np.ones(2), [_ball()])
    res = ccsa.minimize(p, budget=500, tol=1e-14)
    np.testing.assert_allclose(res.x, [0.2, 0.3], atol=1e-6)


def test_active_box_bound():
    p = ccsa.ConstrainedProblem(lambda x: (-float(x[0]), np.array([-1.0])), np.array([0.1]),
                                np.array([0.0]), np.array([0.5]))
    res = ccsa.minimize(p)
    assert res.x[0] == pytest.approx(0.5, abs=1e-12)
    assert res.status == "converged"


def test_anisotropic_qp_with_two_constraints():
    # min (x-1)^2 + 4 (y-1)^2  s.t.  x + y <= 1,  x'x <= 1;  KKT: x - 1 = 4 (y - 1), so (0.2, 0.8)
    lin = lambda x: (float(x[0] + x[1] - 1), np.array([1.0, 1.0]))
    p = ccsa.ConstrainedProblem(_quad([1, 1], [1, 4]), np.array([0.1, 0.1]), np.zeros(2), np.ones(2),
                                [lin, _ball()])
    res = ccsa.minimize(p, budget=1000, tol=1e-14)
    np.testing.assert_allclose(res.x, [0.2, 0.8], atol=1e-5)


def test_rejects_infeasible_start():
    p = ccsa.ConstrainedProblem(_quad([0, 0]), np.array([0.9, 0.9]), np.zeros(2), np.ones(2), [_ball()])
    with pytest.raises(InvalidArgumentError):
        ccsa.minimize(p)
    p = ccsa.ConstrainedProblem(_quad([0, 0]), np.array([1.5, 0.0]), np.zeros(2), np.ones(2))
    with pytest.raises(InvalidArgumentError):
        ccsa.minimize(p)


def test_iteration_limit_status():
    p = ccsa.ConstrainedProblem(_quad([2, 2]), np.array([0.0, 0.0]), np.zeros(2), np.full(2, 3.0), [_ball()])
    res = ccsa.minimize(p, budget=1, tol=0.0, xtol=0.0)
    assert res.status == "iteration-limit" and res.iterations == 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.lists(st.floats(0.1, 10), min_size=3, max_size=3))
def test_feasible_and_monotone(center, scale):
    evaluated = []

    def f(x):
        assert x @ x <= 1 + 1e-10, "objective evaluated outside the feasible set"
        evaluated.append(x.copy())
        return _quad(center, scale)(x)

    p = ccsa.ConstrainedProblem(f, np.full(3, 0.1), np.full(3, -1.0), np.full(3, 1.0), [_ball()])
    res = ccsa.minimize(p, budget=100)
    assert res.x @ res.x <= 1 + 1e-10
    assert np.all(np.diff(res.history) <= 0)
    assert res.f <= res.history[0]
    assert res.status in ("converged", "iteration-limit", "stalled")
