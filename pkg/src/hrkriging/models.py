"""Ordinary, rational and heteroskedastic rational kriging.

All three models share one fitted representation, :class:`HRKFit`. The
process standard deviation is ``nu / (c0 + r(x)' c)`` and the weight vector
``ctilde = (c0, c)`` decides which model we have:

* ordinary kriging: ``ctilde = (1, 0, ..., 0)``
* rational kriging: ``ctilde`` is the Perron vector of ``Rt' R^-1 Rt``
* heteroskedastic rational kriging: ``ctilde`` maximizes the marginal
  likelihood (see :mod:`hrkriging.hrk`)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from . import kernel as km
from .errors import InvalidArgumentError, IterationLimitError
from .kernel import CorrelationSystem, KernelSpec

log = logging.getLogger(__name__)

THETA_BOUNDS = (0.05, 10.0)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design scaled to the unit cube plus the responses.

    ``lower``/``upper`` are the native bounds used for the affine map.
    """

    X: np.ndarray
    Y: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float).ravel()
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if X.shape[0] != Y.size:
            raise InvalidArgumentError(f"X has {X.shape[0]} rows but Y has {Y.size}")
        if X.shape[0] < 2:
            raise InvalidArgumentError("a dataset needs at least 2 points")
        if lower.size != X.shape[1] or upper.size != X.shape[1]:
            raise InvalidArgumentError("scaling bounds do not match the input dimension")
        if np.any(lower >= upper):
            raise InvalidArgumentError("scaling bounds need lower < upper")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InvalidArgumentError("non-finite values in the data")
        if km.min_pairwise_distance(X) <= km.DUPLICATE_TOL:
            raise km.DuplicatePointError("dataset contains duplicate rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_native(cls, X, Y, lower=None, upper=None) -> "Dataset":
        """Scale native inputs to ``[0, 1]^p``; bounds default to the column ranges."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lower = X.min(axis=0) if lower is None else np.asarray(lower, dtype=float)
        upper = X.max(axis=0) if upper is None else np.asarray(upper, dtype=float)
        if np.any(lower >= upper):
            raise InvalidArgumentError("a constant input column cannot be scaled")
        return cls((X - lower) / (upper - lower), Y, lower, upper)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.lower) / (self.upper - self.lower)

    def to_native(self, u):
        return self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)

    def augment(self, x_unit, y) -> "Dataset":
        return Dataset(
            np.vstack([self.X, np.atleast_2d(x_unit)]),
            np.append(self.Y, y),
            self.lower,
            self.upper,
        )


@dataclass(frozen=True)
class FitOptions:
    """Lengthscale-search settings.

    ``theta0`` warm-starts the search (it replaces the heuristic start);
    ``isotropic=None`` ties the lengthscales automatically when ``n < 3p``.
    """

    seed: int = 0
    n_starts: int = 5
    theta_bounds: tuple = THETA_BOUNDS
    xtol: float = 1e-4
    ftol: float = 1e-8
    maxfev: int = 2000
    theta0: tuple | None = None
    isotropic: bool | None = None


@dataclass(frozen=True, eq=False)
class HRKFit:
    kind: str
    data: Dataset
    sys: CorrelationSystem
    mu: float
    nu2: float
    ctilde: np.ndarray
    d: np.ndarray
    w: np.ndarray
    loglik: float
    flags: dict = field(default_factory=dict)

    @property
    def kernel(self) -> KernelSpec:
        return self.sys.kernel

    @property
    def theta(self) -> np.ndarray:
        return self.sys.kernel.lengthscales

    @property
    def c0(self) -> float:
        return float(self.ctilde[0])

    @property
    def c(self) -> np.ndarray:
        return self.ctilde[1:]


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray | float
    variance: np.ndarray | float

    @property
    def sd(self):
        return np.sqrt(self.variance)


# ---------------------------------------------------------------- likelihood


def profiled_mu(d, sys: CorrelationSystem, Y) -> float:
    """Maximum-likelihood mean for weights ``d``: ``d'R^-1 diag(d) Y / d'R^-1 d``."""
    d = np.asarray(d, dtype=float)
    Rinv_d = km.solve_spd(sys, d)
    return float(Rinv_d @ (d * Y) / (Rinv_d @ d))


def profiled_nu2(d, sys: CorrelationSystem, Y, mu: float) -> float:
    e = np.asarray(d, dtype=float) * (np.asarray(Y, dtype=float) - mu)
    return max(float(e @ km.solve_spd(sys, e)) / len(e), 0.0)


def profile_loglik(sys: CorrelationSystem, d, nu2: float) -> float:
    """Log-likelihood with ``mu`` and ``nu2`` at their profiled values."""
    n = sys.n
    if nu2 <= 0:
        return np.inf
    return float(-0.5 * n * np.log(nu2) + np.sum(np.log(d)) - 0.5 * sys.logdet - 0.5 * n)


def rk_matrix(sys: CorrelationSystem) -> np.ndarray:
    """``Rt' R^-1 Rt`` with ``Rt = [1, R]``; equals ``[[1'R^-1 1, 1'], [1, R]]``."""
    n = sys.n
    M = np.empty((n + 1, n + 1))
    M[0, 0] = np.sum(sys.Rinv_ones)
    M[0, 1:] = 1.0
    M[1:, 0] = 1.0
    M[1:, 1:] = sys.R
    return M


def rk_weights(sys: CorrelationSystem) -> np.ndarray:
    M = rk_matrix(sys)
    try:
        v, _ = km.perron_eigenvector(M)
    except IterationLimitError:
        log.warning("power iteration stalled, using the dense eigensolver")
        v, _ = km.perron_eigh(M)
    return v


def ok_weights(n: int) -> np.ndarray:
    ct = np.zeros(n + 1)
    ct[0] = 1.0
    return ct


def make_fit(kind, data: Dataset, sys: CorrelationSystem, ctilde, mu=None, nu2=None, flags=None) -> HRKFit:
    """Assemble an :class:`HRKFit`; ``mu``/``nu2`` are profiled when omitted."""
    ctilde = np.array(ctilde, dtype=float)
    Y = data.Y
    d = ctilde[0] + sys.R @ ctilde[1:]
    if mu is None:
        mu = profiled_mu(d, sys, Y)
    if nu2 is None:
        nu2 = profiled_nu2(d, sys, Y, mu)
    w = km.solve_spd(sys, d * (Y - mu))
    for a in (ctilde, d, w):
        a.setflags(write=False)
    return HRKFit(
        kind=kind,
        data=data,
        sys=sys,
        mu=float(mu),
        nu2=float(nu2),
        ctilde=ctilde,
        d=d,
        w=w,
        loglik=profile_loglik(sys, d, nu2),
        flags=dict(flags or {}),
    )


# ---------------------------------------------------------------- prediction


def _design_corr(fit: HRKFit, x):
    """Cross-correlations plus the prior correlation at ``x``.

    Points that coincide with a design row pick up the jitter on that entry and
    on the prior term, so the jittered kernel is used consistently.
    """
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    r = km.cross_corr(x2, fit.sys.X, fit.kernel)
    prior = np.ones(x2.shape[0])
    jit = fit.sys.jitter
    if jit > 0:
        hit = np.argwhere(r >= 1.0 - 1e-15)
        if hit.size:
            d2 = np.sum((x2[hit[:, 0]] - fit.sys.X[hit[:, 1]]) ** 2, axis=1)
            close = hit[d2 <= km.DUPLICATE_TOL**2]
            r[close[:, 0], close[:, 1]] += jit
            prior[close[:, 0]] += jit
    return r, prior


def predict(fit: HRKFit, x) -> Prediction:
    """Posterior mean and variance at ``x`` (one point or one row per point)."""
    x = np.asarray(x, dtype=float)
    r, prior = _design_corr(fit, x)
    denom = fit.c0 + r @ fit.c
    mean = fit.mu + (r @ fit.w) / denom
    V = scipy.linalg.solve_triangular(fit.sys.chol, r.T, lower=True)
    var = fit.nu2 * (prior - np.sum(V * V, axis=0)) / denom**2
    var = np.maximum(var, 0.0)
    if x.ndim <= 1:
        return Prediction(float(mean[0]), float(var[0]))
    return Prediction(mean, var)


def tau(fit: HRKFit, x):
    """Input-dependent process scale ``nu / (c0 + r(x)' c)``."""
    x = np.asarray(x, dtype=float)
    r, _ = _design_corr(fit, x)
    t = np.sqrt(fit.nu2) / (fit.c0 + r @ fit.c)
    return float(t[0]) if x.ndim <= 1 else t


def posterior_mu(fit: HRKFit):
    """Posterior mean and variance of ``mu`` under a flat prior."""
    Rinv_d = km.solve_spd(fit.sys, fit.d)
    q = float(fit.d @ Rinv_d)
    return float(Rinv_d @ (fit.d * fit.data.Y)) / q, fit.nu2 / q


# ---------------------------------------------------------------- fitting


def _is_isotropic(data: Dataset, opts: FitOptions) -> bool:
    if opts.isotropic is not None:
        return opts.isotropic
    return data.n < 3 * data.p


def _search_theta(data: Dataset, opts: FitOptions, objective):
    """Maximize ``objective(sys)`` over log-lengthscales with Nelder-Mead restarts."""
    p = data.p
    iso = _is_isotropic(data, opts)
    k = 1 if iso else p
    lo, hi = np.log(opts.theta_bounds[0]), np.log(opts.theta_bounds[1])
    rng = np.random.default_rng(opts.seed)

    def expand(z):
        z = np.clip(z, lo, hi)
        return np.exp(np.full(p, z[0]) if iso else z)

    cache = {}

    def negll(z):
        key = tuple(np.round(np.clip(z, lo, hi), 14))
        if key not in cache:
            try:
                sys = km.build_system(data.X, KernelSpec(expand(z)))
                val = -objective(sys)
            except (km.IllConditionedError, FloatingPointError, np.linalg.LinAlgError):
                val = np.inf
            cache[key] = val if np.isfinite(val) else 1e300
        return cache[key]

    if opts.theta0 is not None:
        t0 = np.log(np.asarray(opts.theta0, dtype=float))
        first = np.array([t0.mean()]) if iso else np.resize(t0, p)
    else:
        first = np.full(k, np.log(0.5 * np.sqrt(p)))
    starts = [np.clip(first, lo, hi)]
    starts += [rng.uniform(lo, hi, size=k) for _ in range(max(opts.n_starts - 1, 0))]

    best_z, best_val = None, np.inf
    for z0 in starts:
        res = scipy.optimize.minimize(
            negll,
            z0,
            method="Nelder-Mead",
            bounds=[(lo, hi)] * k,
            options={"xatol": opts.xtol, "fatol": opts.ftol, "maxfev": opts.maxfev},
        )
        if res.fun < best_val:
            best_z, best_val = np.clip(res.x, lo, hi), res.fun
    if best_z is None or not np.isfinite(best_val) or best_val >= 1e300:
        raise km.IllConditionedError("no lengthscale gave a usable correlation system")
    return KernelSpec(expand(best_z))


def _degenerate_fit(kind, data: Dataset, opts: FitOptions) -> HRKFit:
    theta = np.full(data.p, 0.5 * np.sqrt(data.p))
    sys = km.build_system(data.X, KernelSpec(theta))
    return make_fit(
        kind, data, sys, ok_weights(data.n), mu=float(data.Y[0]), nu2=0.0,
        flags={"degenerate": True},
    )


def ok_loglik(sys: CorrelationSystem, Y) -> float:
    ones = np.ones(sys.n)
    mu = profiled_mu(ones, sys, Y)
    return profile_loglik(sys, ones, profiled_nu2(ones, sys, Y, mu))


def rk_loglik(sys: CorrelationSystem, Y) -> float:
    ct = rk_weights(sys)
    d = ct[0] + sys.R @ ct[1:]
    mu = profiled_mu(d, sys, Y)
    return profile_loglik(sys, d, profiled_nu2(d, sys, Y, mu))


def fit_ok(data: Dataset, opts: FitOptions = FitOptions()) -> HRKFit:
    """Ordinary kriging with generalized-least-squares mean and ML lengthscales."""
    if np.ptp(data.Y) == 0:
        return _degenerate_fit("ok", data, opts)
    k = _search_theta(data, opts, lambda sys: ok_loglik(sys, data.Y))
    sys = km.build_system(data.X, k)
    return make_fit("ok", data, sys, ok_weights(data.n))


def fit_rk(data: Dataset, opts: FitOptions = FitOptions()) -> HRKFit:
    """Rational kriging; the Perron vector is recomputed for every candidate lengthscale."""
    if np.ptp(data.Y) == 0:
        return _degenerate_fit("rk", data, opts)
    k = _search_theta(data, opts, lambda sys: rk_loglik(sys, data.Y))
    sys = km.build_system(data.X, k)
    return make_fit("rk", data, sys, rk_weights(sys))


def with_weights(fit: HRKFit, ctilde, kind=None, **flags) -> HRKFit:
    """Refit ``mu``/``nu2`` on the same correlation system with new weights."""
    return make_fit(kind or fit.kind, fit.data, fit.sys, ctilde, flags={**fit.flags, **flags})
