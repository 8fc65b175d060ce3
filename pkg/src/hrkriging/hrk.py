"""Heteroskedastic rational kriging: marginal-likelihood estimation of the weights.

Starting from a rational-kriging fit, the lengthscales and the mean are held
at their rational-kriging values and ``c`` (with ``c0 = sqrt(1 - c'c)``) is
chosen to minimize

    g(c) = log(nu2(c)) - (2 / n) * sum(log(d)),   d = c0 * 1 + R c,

where ``nu2(c)`` is the profiled variance. Since the mean is frozen, ``nu2`` is
a quadratic form in ``(c0, c)`` and everything except the inner products is
precomputed once per fit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import ccsa
from . import kernel as km
from .errors import BoundarySingularityError, InfeasiblePointError
from .kernel import CorrelationSystem
from .models import (
    Dataset,
    FitOptions,
    HRKFit,
    fit_rk,
    make_fit,
    profiled_mu,
    profiled_nu2,
)

log = logging.getLogger(__name__)

BOUNDARY_EPS = 1e-8
FEAS_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class ObjectiveContext:
    sys: CorrelationSystem
    Q: np.ndarray
    q11: float  # 1'Q1
    RQ1: np.ndarray
    RQR: np.ndarray
    mu_rk: float

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def R(self) -> np.ndarray:
        return self.sys.R


def make_context(sys: CorrelationSystem, Y, mu: float) -> ObjectiveContext:
    """Precompute ``Q = diag(e) R^-1 diag(e)`` with ``e = Y - mu`` and its products with ``R``."""
    e = np.asarray(Y, dtype=float) - mu
    Rinv_De = km.solve_spd(sys, np.diag(e))
    Q = e[:, None] * Rinv_De
    Q = 0.5 * (Q + Q.T)
    R = sys.R
    DR = e[:, None] * R
    RQR = DR.T @ km.solve_spd(sys, DR)
    RQR = 0.5 * (RQR + RQR.T)
    RQ1 = R @ (e * km.solve_spd(sys, e))
    q11 = float(e @ km.solve_spd(sys, e))
    return ObjectiveContext(sys=sys, Q=Q, q11=q11, RQ1=RQ1, RQR=RQR, mu_rk=float(mu))


def _parts(c, ctx: ObjectiveContext):
    c = np.asarray(c, dtype=float)
    cc = float(c @ c)
    if cc > 1.0 - FEAS_EPS or np.any(c < -1e-12):
        raise InfeasiblePointError(f"c is outside the feasible set (c'c = {cc!r})")
    s = np.sqrt(1.0 - cc)
    d = s + ctx.R @ c
    if np.any(d <= 0):
        raise InfeasiblePointError("non-positive entry in d")
    cRQ1 = float(c @ ctx.RQ1)
    RQRc = ctx.RQR @ c
    nu2 = ((1.0 - cc) * ctx.q11 + 2.0 * s * cRQ1 + float(c @ RQRc)) / ctx.n
    return c, cc, s, d, cRQ1, RQRc, nu2


def objective_g(c, ctx: ObjectiveContext) -> float:
    c, cc, s, d, cRQ1, RQRc, nu2 = _parts(c, ctx)
    return float(np.log(nu2) - 2.0 / ctx.n * np.sum(np.log(d)))


def gradient_g(c, ctx: ObjectiveContext) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if 1.0 - float(c @ c) < BOUNDARY_EPS * (1 - 1e-6):
        raise BoundarySingularityError("gradient of g is singular at c'c = 1")
    c, cc, s, d, cRQ1, RQRc, nu2 = _parts(c, ctx)
    n = ctx.n
    first = 2.0 / (n * nu2) * (RQRc + s * ctx.RQ1 - ctx.q11 * c - cRQ1 / s * c)
    inv_d = 1.0 / d
    second = 2.0 / n * (ctx.R @ inv_d - c * (np.sum(inv_d) / s))
    return first - second


def ratio_objective(b, ctx: ObjectiveContext):
    """Value and gradient of ``g`` in the coordinates ``b = c / c0``.

    The likelihood is invariant to rescaling ``(c0, c)``, so
    ``g(c) = h(c / sqrt(1 - c'c))`` with

        h(b) = log((1'Q1 + 2 b'RQ1 + b'RQRb) / n) - (2 / n) * sum(log(1 + R b)),

    which has no square-root singularity as ``c0 -> 0``.
    """
    b = np.asarray(b, dtype=float)
    n = ctx.n
    db = 1.0 + ctx.R @ b
    if np.any(db <= 0):
        raise InfeasiblePointError("non-positive entry in d")
    RQRb = ctx.RQR @ b
    nu = (ctx.q11 + 2.0 * float(b @ ctx.RQ1) + float(b @ RQRb)) / n
    val = float(np.log(nu) - 2.0 / n * np.sum(np.log(db)))
    grad = 2.0 / (n * nu) * (ctx.RQ1 + RQRb) - 2.0 / n * (ctx.R @ (1.0 / db))
    return val, grad


def _optimize_sphere(ctx, c_start, limit, budget, tol):
    n = ctx.n
    problem = ccsa.ConstrainedProblem(
        objective=lambda c: (objective_g(c, ctx), gradient_g(c, ctx)),
        x0=c_start,
        lower=np.zeros(n),
        upper=np.ones(n),
        constraints=[lambda c: (float(c @ c) - limit, 2.0 * c)],
    )
    res = ccsa.minimize(problem, budget=budget, tol=tol)
    return res.x, res


def _optimize_ratio(ctx, c_start, limit, budget, tol):
    n = ctx.n
    # c'c <= 1 - eps  <=>  b'b <= (1 - eps) / eps
    bmax2 = limit / (1.0 - limit)
    b_start = c_start / np.sqrt(1.0 - c_start @ c_start)
    problem = ccsa.ConstrainedProblem(
        objective=lambda b: ratio_objective(b, ctx),
        x0=b_start,
        lower=np.zeros(n),
        upper=np.full(n, np.sqrt(bmax2)),
        constraints=[lambda b: (float(b @ b) - bmax2, 2.0 * b)],
    )
    res = ccsa.minimize(problem, budget=budget, tol=tol)
    return res.x / np.sqrt(1.0 + res.x @ res.x), res


def fit_hrk(data: Dataset, opts: FitOptions = FitOptions(), rk: HRKFit | None = None,
            budget: int = 200, tol: float = 1e-8, coords: str = "ratio") -> HRKFit:
    """Fit HRK: rational-kriging start, then CCSA on ``g`` with the mean frozen.

    ``coords="ratio"`` runs the optimizer on ``b = c / c0`` (same optimum,
    better conditioned near ``c0 = 0``); ``coords="sphere"`` runs it on ``c``
    directly. ``rk`` may pass an existing rational-kriging fit. On optimizer
    failure the rational-kriging weights are kept and the fit is flagged
    ``fallback``.
    """
    if rk is None:
        rk = fit_rk(data, opts)
    if rk.flags.get("degenerate"):
        return make_fit("hrk", data, rk.sys, rk.ctilde, mu=rk.mu, nu2=rk.nu2, flags=rk.flags)
    ctx = make_context(rk.sys, data.Y, rk.mu)
    limit = 1.0 - BOUNDARY_EPS
    c_start = np.clip(rk.ctilde[1:], 0.0, 1.0)
    if c_start @ c_start > limit:
        c_start = c_start * np.sqrt(limit / (c_start @ c_start)) * (1 - 1e-12)
    flags = dict(rk.flags)
    optimize = {"ratio": _optimize_ratio, "sphere": _optimize_sphere}[coords]
    try:
        g_rk = objective_g(c_start, ctx)
        c, res = optimize(ctx, c_start, limit, budget, tol)
        g_final = objective_g(c, ctx)
        if not g_final <= g_rk:
            # rounding in the change of coordinates; never hand back a worse point
            c, g_final = c_start, g_rk
        flags.update(optimizer=res.status, iterations=res.iterations, g_rk=g_rk, g_final=g_final)
    except Exception as exc:  # noqa: BLE001 - never let HRK break a caller's loop
        log.warning("HRK weight optimization failed (%s); keeping the RK weights", exc)
        flags.update(fallback=True, optimizer="failed", error=str(exc))
        return make_fit("hrk", data, rk.sys, rk.ctilde, flags=flags)

    ctilde = np.concatenate([[np.sqrt(max(1.0 - c @ c, 0.0))], c])
    ctilde /= np.linalg.norm(ctilde)
    d = ctilde[0] + rk.sys.R @ ctilde[1:]
    mu = profiled_mu(d, rk.sys, data.Y)
    nu2 = profiled_nu2(d, rk.sys, data.Y, mu)
    return make_fit("hrk", data, rk.sys, ctilde, mu=mu, nu2=nu2, flags=flags)
