import numpy as np
import pytest

from hrkriging import kernel as km
from hrkriging import models as mdl
from hrkriging.errors import BoundarySingularityError, InfeasiblePointError
from hrkriging.hrk import fit_hrk, gradient_g, make_context, objective_g, ratio_objective
from hrkriging.models import Dataset, FitOptions

import oracles


def _ctx(n, seed, theta=0.3, p=1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    Y = np.sin(5 * X).sum(axis=1) + 0.3 * rng.normal(size=n)
    s = km.build_system(X, km.KernelSpec(np.full(p, theta)))
    mu = float(rng.normal())
    return make_context(s, Y, mu), s, Y, mu


def _feasible(rng, n, radius=0.95):
    c = np.abs(rng.normal(size=n))
    return c / np.linalg.norm(c) * radius * rng.uniform() ** (1 / n)


def test_context_consistency():
    ctx, s, Y, mu = _ctx(6, 0)
    e = Y - mu
    Q = np.diag(e) @ np.linalg.inv(s.R) @ np.diag(e)
    np.testing.assert_allclose(ctx.Q, Q, atol=1e-8)
    assert ctx.q11 == pytest.approx(Q.sum(), rel=1e-8)
    np.testing.assert_allclose(ctx.RQ1, s.R @ Q @ np.ones(6), atol=1e-8)
    np.testing.assert_allclose(ctx.RQR, s.R @ Q @ s.R, atol=1e-8)
    assert np.min(np.linalg.eigvalsh(ctx.Q)) >= -1e-10


def test_objective_at_zero():
    ctx, *_ = _ctx(5, 1)
    assert objective_g(np.zeros(5), ctx) == pytest.approx(np.log(ctx.q11 / 5), rel=1e-13)


def test_objective_matches_density_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(2, 11))
        ctx, s, Y, mu = _ctx(n, int(rng.integers(1 << 30)), theta=0.15)
        c = _feasible(rng, n)
        ref = oracles.profile_g_via_density(np.array(s.R), Y, mu, c)
        assert objective_g(c, ctx) == pytest.approx(ref, abs=1e-8)


def test_infeasible_points_raise():
    ctx, *_ = _ctx(4, 3)
    with pytest.raises(InfeasiblePointError):
        objective_g(np.array([1.0, 0.1, 0, 0]), ctx)
    with pytest.raises(InfeasiblePointError):
        objective_g(np.array([-0.1, 0.1, 0, 0]), ctx)
    with pytest.raises(BoundarySingularityError):
        gradient_g(np.array([1 - 1e-10, 0, 0, 0]), ctx)


def _fd(c, ctx, h=1e-6):
    g = np.empty_like(c)
    for i in range(len(c)):
        e = np.zeros_like(c)
        e[i] = h
        g[i] = (objective_g(c + e, ctx) - objective_g(c - e, ctx)) / (2 * h)
    return g


def test_gradient_at_zero():
    ctx, s, Y, mu = _ctx(5, 4)
    nu2 = ctx.q11 / 5
    expected = 2 / 5 * (ctx.RQ1 / nu2 - s.R @ np.ones(5))
    np.testing.assert_allclose(gradient_g(np.zeros(5), ctx), expected, rtol=1e-12)


@pytest.mark.parametrize("n", [3, 5])
def test_gradient_matches_finite_differences(n):
    rng = np.random.default_rng(n)
    ctx, *_ = _ctx(n, 10 + n)
    for _ in range(20):
        c = _feasible(rng, n, radius=0.9) + 2e-6
        np.testing.assert_allclose(gradient_g(c, ctx), _fd(c, ctx), rtol=1e-5, atol=1e-7)


def test_gradient_symmetry():
    X = np.array([[0.2], [0.8]])
    s = km.build_system(X, km.KernelSpec([0.3]))
    ctx = make_context(s, np.array([1.0, 1.0]) + np.array([0.5, 0.5]), 0.0)
    g = gradient_g(np.array([0.3, 0.3]), ctx)
    assert abs(g[0] - g[1]) <= 1e-10


def test_ratio_coordinates_agree():
    ctx, *_ = _ctx(6, 5)
    rng = np.random.default_rng(5)
    for _ in range(10):
        c = _feasible(rng, 6)
        b = c / np.sqrt(1 - c @ c)
        val, grad = ratio_objective(b, ctx)
        assert val == pytest.approx(objective_g(c, ctx), abs=1e-12)
        h = 1e-6
        fd = np.array([(ratio_objective(b + h * e, ctx)[0] - ratio_objective(b - h * e, ctx)[0]) / (2 * h)
                       for e in np.eye(6)])
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)


def _osc_data(n=10):
    X = np.linspace(0, 1, n)[:, None]
    return Dataset(X, np.exp(-6 * X[:, 0]) * np.cos(6 * np.pi * X[:, 0]), [0.0], [1.0])


def test_fit_hrk_contract():
    data = _osc_data()
    rk = mdl.fit_rk(data)
    fit = fit_hrk(data, rk=rk)
    assert fit.kind == "hrk"
    assert np.linalg.norm(fit.ctilde) == pytest.approx(1.0, abs=1e-10)
    assert fit.ctilde.min() >= -1e-12
    assert np.all(fit.d > 0)
    np.testing.assert_array_equal(fit.theta, rk.theta)
    assert fit.flags["g_final"] <= fit.flags["g_rk"] + 1e-12
    ctx = make_context(rk.sys, data.Y, rk.mu)
    assert objective_g(fit.c, ctx) <= objective_g(np.clip(rk.c, 0, 1), ctx) + 1e-12
    # mu and nu2 are re-profiled at the final weights
    assert fit.mu == pytest.approx(mdl.profiled_mu(fit.d, fit.sys, data.Y), rel=1e-12)
    t = mdl.tau(fit, np.array([[0.05], [0.95]]))
    assert t[0] > t[1]


def test_fit_hrk_deterministic():
    data = _osc_data()
    a = fit_hrk(data, FitOptions(seed=1))
    b = fit_hrk(data, FitOptions(seed=1))
    np.testing.assert_array_equal(a.ctilde, b.ctilde)


def test_fit_hrk_both_coordinate_systems_improve():
    data = _osc_data()
    rk = mdl.fit_rk(data)
    for coords in ("ratio", "sphere"):
        fit = fit_hrk(data, rk=rk, coords=coords)
        assert fit.flags["g_final"] <= fit.flags["g_rk"] + 1e-12


def test_fit_hrk_falls_back(monkeypatch):
    import hrkriging.hrk as hrk_mod

    def boom(*a, **k):
        raise RuntimeError("optimizer exploded")

    monkeypatch.setattr(hrk_mod, "_optimize_ratio", boom)
    data = _osc_data()
    fit = fit_hrk(data)
    assert fit.flags["fallback"]
    np.testing.assert_allclose(fit.ctilde, mdl.fit_rk(data).ctilde)


def test_fit_hrk_constant_response():
    data = Dataset(np.linspace(0, 1, 6)[:, None], np.full(6, 2.0), [0.0], [1.0])
    fit = fit_hrk(data)
    assert fit.flags["degenerate"] and fit.mu == 2.0


def test_stationary_truth_gives_flat_tau():
    """Draws from a stationary GP should not produce strong heteroskedasticity."""
    flat = 0
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        X = rng.uniform(size=(30, 1))
        G = oracles.gauss_corr(X, X, [0.2]) + 1e-8 * np.eye(30)
        Y = np.linalg.cholesky(G) @ rng.normal(size=30)
        fit = fit_hrk(Dataset(X, Y, [0.0], [1.0]))
        t = mdl.tau(fit, rng.uniform(size=(100, 1)))
        flat += t.max() / t.min() < 2
    assert flat >= 8
