"""Conservative convex separable approximation (CCSA) minimizer.

This is the quadratic-penalty member of Svanberg's globally convergent
moving-asymptotes family (K. Svanberg, "A class of globally convergent
optimization methods based on conservative convex separable
approximations", SIAM J. Optim. 12, 2002). Each outer iteration builds, for
the objective and for every constraint,

    g_i(y) = f_i(x) + grad f_i(x) . (y - x) + rho_i / 2 * sum(((y - x) / sigma)**2)

and minimizes ``g_0`` subject to ``g_i <= 0`` inside the box and the trust
region ``|y - x| <= sigma`` through the one-dimensional-per-constraint dual.
The inner loop raises ``rho_i`` until every approximation is conservative at
the trial point, which makes the accepted iterates feasible and the objective
non-increasing.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

RHO_MIN = 1e-5
SIGMA_GROW = 1.2
SIGMA_SHRINK = 0.7
MAX_INNER = 60
STALL_ITERS = 10
STALL_TOL = 1e-14
FEAS_TOL = 1e-10

# value-and-gradient callable
FunGrad = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclasses.dataclass
class ConstrainedProblem:
    """Minimize ``objective`` s.t. every ``constraints[j](x)[0] <= 0`` and ``lower <= x <= upper``."""

    objective: FunGrad
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    constraints: Sequence[FunGrad] = ()


@dataclasses.dataclass
class Result:
    x: np.ndarray
    f: float
    status: str
    iterations: int
    history: list


def _solve_subproblem(x, sigma, lo, hi, grads, rhos, cvals):
    """Minimize the separable model of the objective under the constraint models.

    ``grads[0]``/``rhos[0]`` belong to the objective; the rest to the
    constraints whose current values are ``cvals``.
    """
    w = sigma**2

    def primal(lam):
        a = grads[0] + lam @ grads[1:] if len(lam) else grads[0]
        b = rhos[0] + lam @ rhos[1:] if len(lam) else rhos[0]
        return np.clip(x - a * w / b, lo, hi)

    def cmodel(y):
        dy = y - x
        q = 0.5 * np.sum(dy * dy / w)
        return cvals + grads[1:] @ dy + rhos[1:] * q

    m = len(cvals)
    lam = np.zeros(m)
    y = primal(lam)
    if m == 0 or np.all(cmodel(y) <= 0):
        return y
    if m == 1:
        # the model constraint is non-increasing in lam: bracket, then bisect
        hi_l = 1.0
        while cmodel(primal(np.array([hi_l])))[0] > 0:
            hi_l *= 2.0
            if hi_l > 1e300:
                return x.copy()
        lo_l = 0.0
        for _ in range(200):
            mid = 0.5 * (lo_l + hi_l)
            if cmodel(primal(np.array([mid])))[0] > 0:
                lo_l = mid
            else:
                hi_l = mid
            if hi_l - lo_l <= 1e-15 * hi_l:
                break
        return primal(np.array([hi_l]))

    def neg_dual(lam):
        y = primal(lam)
        dy = y - x
        q = 0.5 * np.sum(dy * dy / w)
        g0 = grads[0] @ dy + rhos[0] * q
        gc = cmodel(y)
        return -(g0 + lam @ gc), -gc

    res = scipy.optimize.minimize(
        neg_dual, np.zeros(m), jac=True, method="L-BFGS-B", bounds=[(0, None)] * m,
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000},
    )
    y = primal(res.x)
    # the models are convex and feasible at x: pull back along the segment if needed
    t = 1.0
    while np.any(cmodel(x + t * (y - x)) > 0):
        t *= 0.5
        if t < 1e-12:
            return x.copy()
    return x + t * (y - x)


def minimize(p: ConstrainedProblem, budget: int = 200, tol: float = 1e-8, xtol: float | None = None) -> Result:
    """Run CCSA from ``p.x0``.

    Stops with ``converged`` when the model step is zero, or when an accepted
    step changes the objective by less than ``tol`` or moves no coordinate by
    more than ``xtol`` (defaults to ``tol``); ``stalled`` when no conservative step can be found or the
    objective has not moved by more than 1e-14 for 10 iterations;
    ``iteration-limit`` after ``budget`` outer iterations.
    """
    xtol = tol if xtol is None else xtol
    lo = np.asarray(p.lower, dtype=float)
    hi = np.asarray(p.upper, dtype=float)
    x = np.asarray(p.x0, dtype=float).copy()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise InvalidArgumentError("box bounds must be finite")
    if np.any(x < lo) or np.any(x > hi):
        raise InvalidArgumentError("start point violates the box bounds")
    ncon = len(p.constraints)
    cvals = np.empty(ncon)
    cgrads = np.empty((ncon, x.size))
    for j, con in enumerate(p.constraints):
        v, g = con(x)
        cvals[j], cgrads[j] = v, g
    if np.any(cvals > FEAS_TOL):
        raise InvalidArgumentError(f"start point is infeasible: {cvals}")
    f, grad = p.objective(x)
    if not np.isfinite(f):
        raise InvalidArgumentError("objective is not finite at the start point")

    span = hi - lo
    sigma = 0.5 * span
    rhos = np.ones(ncon + 1)
    x_prev = x_prev2 = None
    history = [float(f)]
    status = "iteration-limit"
    quiet = 0
    it = 0
    for it in range(1, budget + 1):
        grads = np.vstack([grad[None, :], cgrads])
        tlo = np.maximum(lo, x - sigma)
        thi = np.minimum(hi, x + sigma)
        accepted = stationary = False
        for _ in range(MAX_INNER):
            y = _solve_subproblem(x, sigma, tlo, thi, grads, rhos, cvals)
            dy = y - x
            wq = 0.5 * np.sum(dy * dy / sigma**2)
            if wq == 0.0:
                # x already minimizes the convex model: a KKT point
                stationary = True
                break
            new_c = np.empty(ncon)
            new_cg = np.empty_like(cgrads)
            for j, con in enumerate(p.constraints):
                v, g = con(y)
                new_c[j], new_cg[j] = v, g
            model_c = cvals + cgrads @ dy + rhos[1:] * wq
            bad = new_c > model_c + 1e-14 * np.abs(model_c)
            if np.any(bad) or np.any(new_c > FEAS_TOL):
                for j in np.flatnonzero(bad | (new_c > FEAS_TOL)):
                    gap = max(new_c[j] - model_c[j], 0.0)
                    rhos[j + 1] = min(10 * rhos[j + 1], 1.1 * (rhos[j + 1] + gap / wq))
                continue
            # constraints hold at y, so the objective is only evaluated when feasible
            f_new, grad_new = p.objective(y)
            model_f = f + grad @ dy + rhos[0] * wq
            if not np.isfinite(f_new) or f_new > model_f + 1e-14 * abs(model_f) or f_new > f:
                gap = max(f_new - model_f, 0.0) if np.isfinite(f_new) else 10 * rhos[0] * wq
                rhos[0] = min(10 * rhos[0], 1.1 * (rhos[0] + gap / wq))
                continue
            accepted = True
            break
        if stationary:
            status = "converged"
            break
        if not accepted:
            status = "stalled"
            break

        df = f - f_new
        step = np.max(np.abs(dy))
        x_prev2, x_prev, x = x_prev, x, y
        f, grad, cvals, cgrads = f_new, grad_new, new_c, new_cg
        history.append(float(f))

        if df < tol or step < xtol:
            status = "converged"
            break
        quiet = quiet + 1 if df < STALL_TOL else 0
        if quiet >= STALL_ITERS:
            status = "stalled"
            break

        rhos = np.maximum(0.1 * rhos, RHO_MIN)
        if x_prev2 is not None:
            osc = (x - x_prev) * (x_prev - x_prev2)
            sigma = np.where(osc < 0, SIGMA_SHRINK * sigma, np.where(osc > 0, SIGMA_GROW * sigma, sigma))
            sigma = np.clip(sigma, 1e-8 * span, 10 * span)

    return Result(x=x, f=float(f), status=status, iterations=it, history=history)
