"""Active learning MacKay (ALM): add the candidate with the largest posterior variance."""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import benchmarks as bm
from . import design as dz
from .errors import ConfigError, HRKError, InvalidArgumentError
from .hrk import fit_hrk
from .models import Dataset, FitOptions, HRKFit, fit_ok, fit_rk, predict

log = logging.getLogger(__name__)

MODELS = ("ok", "rk", "hrk")
DUPLICATE_RADIUS = 1e-8


def derive_seed(base: int, *keys) -> int:
    """``base XOR blake2b(keys)`` folded to 63 bits; stable across runs and platforms."""
    h = hashlib.blake2b(repr(keys).encode(), digest_size=8).digest()
    return (int(base) ^ int.from_bytes(h, "little")) & (2**63 - 1)


def fit_model(kind: str, data: Dataset, opts: FitOptions = FitOptions()) -> HRKFit:
    if kind == "ok":
        return fit_ok(data, opts)
    if kind == "rk":
        return fit_rk(data, opts)
    if kind == "hrk":
        return fit_hrk(data, opts)
    raise InvalidArgumentError(f"unknown model kind {kind!r}")


def alm_select(fit: HRKFit, candidates) -> tuple[int, np.ndarray, float]:
    """Index, point and variance of the candidate with the largest posterior variance.

    Ties go to the lowest index.
    """
    pts = candidates.points if isinstance(candidates, dz.Design) else np.asarray(candidates, dtype=float)
    pts = np.atleast_2d(pts)
    if pts.shape[0] == 0:
        raise InvalidArgumentError("empty candidate set")
    var = np.atleast_1d(predict(fit, pts).variance)
    i = int(np.argmax(var))
    return i, pts[i].copy(), float(var[i])


def default_test_size(p: int) -> int:
    return 2000 if p <= 2 else 1000 * p


@dataclass
class ALConfig:
    """One active-learning run.

    Give either ``function`` (a registry id) or ``pool_X``/``pool_Y`` (a finite
    native-unit dataset; candidates are then the unused pool rows and the
    test set is whatever has not been selected).
    """

    model: str = "hrk"
    budget: int = 35
    n_ini: int = 10
    function: str | None = "oscillator"
    pool_X: np.ndarray | None = None
    pool_Y: np.ndarray | None = None
    seed: int = 0
    rep: int = 0
    test_size: int | None = None
    test_seed: int | None = None
    warm_start: bool = True
    init: str = "lhd"  # or "space_filling": downsample(random_lhd(100 n_ini, p), n_ini)
    alpha: float = 0.05
    interval: str = "quantile"  # or "2s"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.n_ini < 2:
            raise ConfigError("n_ini must be at least 2")
        if self.budget < self.n_ini:
            raise ConfigError("budget must be >= n_ini")
        if self.init not in ("lhd", "space_filling"):
            raise ConfigError(f"unknown init design {self.init!r}")
        if self.interval not in ("quantile", "2s"):
            raise ConfigError(f"unknown interval rule {self.interval!r}")
        if self.pool_X is None:
            if self.function is None:
                raise ConfigError("need a test function id or a pool dataset")
            bm.get_function(self.function)
        elif self.pool_Y is None or len(self.pool_Y) != len(self.pool_X):
            raise ConfigError("pool_X and pool_Y must have the same number of rows")


@dataclass
class StepRecord:
    step: int  # 0 for the initial design, t for the t-th selected point
    n: int  # design size after this step
    x: np.ndarray  # unit-cube point
    x_native: np.ndarray
    y: float
    score: float  # ALM variance of the chosen candidate (nan for initial points)
    rmse: float = np.nan
    interval_score: float = np.nan
    fit_ms: float = np.nan
    jitter: float = np.nan
    status: str = ""
    theta: np.ndarray | None = None


@dataclass
class ALTrace:
    config: ALConfig
    records: list = field(default_factory=list)
    data: Dataset | None = None
    complete: bool = True
    events: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def selected(self):
        return [r for r in self.records if r.step > 0]


class _Problem:
    """Objective, candidate and test-set plumbing for either a function or a pool."""

    def __init__(self, cfg: ALConfig):
        self.cfg = cfg
        if cfg.pool_X is None:
            self.f = bm.get_function(cfg.function)
            self.lower, self.upper = self.f.lower, self.f.upper
            self.p = self.f.p
            size = cfg.test_size or default_test_size(self.p)
            tseed = derive_seed(cfg.seed if cfg.test_seed is None else cfg.test_seed, "test")
            self.test_X = dz.random_lhd(size, self.p, tseed).points
            self.test_Y = self.f.on_unit(self.test_X)
            self.pool = None
        else:
            X = np.atleast_2d(np.asarray(cfg.pool_X, dtype=float))
            self.lower, self.upper = X.min(axis=0), X.max(axis=0)
            self.p = X.shape[1]
            self.pool = (X - self.lower) / (self.upper - self.lower)
            self.pool_Y = np.asarray(cfg.pool_Y, dtype=float)
            self.used = np.zeros(len(self.pool), dtype=bool)

    def to_native(self, u):
        return self.lower + u * (self.upper - self.lower)

    def initial(self, seed):
        n = self.cfg.n_ini
        if self.pool is not None:
            rng = np.random.default_rng(seed)
            idx = rng.choice(len(self.pool), size=n, replace=False)
            return self.pool[idx], idx
        if self.cfg.init == "space_filling":
            return dz.downsample(dz.random_lhd(100 * n, self.p, seed), n).points, None
        return dz.random_lhd(n, self.p, seed).points, None

    def evaluate(self, u, idx=None):
        if self.pool is not None:
            self.used[idx] = True
            return self.pool_Y[idx]
        return self.f.on_unit(u)

    def candidates(self, design_X, seed):
        if self.pool is not None:
            idx = np.flatnonzero(~self.used)
            return self.pool[idx], idx
        pts = dz.candidate_set(self.p, seed).points
        # never re-select an existing design point
        d2 = np.min(np.sum((pts[:, None, :] - design_X[None, :, :]) ** 2, axis=-1), axis=1)
        keep = d2 > DUPLICATE_RADIUS**2
        return pts[keep], None

    def test_set(self):
        if self.pool is not None:
            idx = np.flatnonzero(~self.used)
            return self.pool[idx], self.pool_Y[idx]
        return self.test_X, self.test_Y


def _status(fit: HRKFit) -> str:
    if fit.flags.get("fallback"):
        return "fallback"
    if fit.flags.get("degenerate"):
        return "degenerate"
    return fit.flags.get("optimizer", "ok")


def run_active_learning(cfg: ALConfig) -> ALTrace:
    """Grow an initial design to ``cfg.budget`` points by ALM with ``cfg.model``.

    The model is refitted after every addition; RMSE and interval score of
    each fit on the test set are recorded against the design size. A new
    candidate set is drawn at every step from ``derive_seed(seed, rep, step)``.
    """
    prob = _Problem(cfg)
    trace = ALTrace(config=cfg)
    trace.metadata.update(
        candidate_policy="regenerated per step, seed = derive_seed(seed, rep, step)",
        candidate_size=None if prob.pool is not None else dz.candidate_size(prob.p),
        test_size=None if prob.pool is not None else len(prob.test_X),
        interval=cfg.interval,
        alpha=cfg.alpha,
        warm_start=cfg.warm_start,
        init=cfg.init,
    )
    U, idx = prob.initial(derive_seed(cfg.seed, cfg.rep, "init"))
    try:
        Y = np.atleast_1d(prob.evaluate(U, idx))
    except Exception as exc:  # noqa: BLE001
        trace.complete = False
        trace.events.append(f"initial evaluation failed: {exc}")
        return trace
    for u, y in zip(U, Y):
        trace.records.append(StepRecord(0, cfg.n_ini, u, prob.to_native(u), float(y), np.nan))
    data = Dataset(U, Y, np.zeros(prob.p), np.ones(prob.p))
    theta = None

    step = 0
    while True:
        opts = FitOptions(
            seed=derive_seed(cfg.seed, cfg.rep, step, "theta"),
            theta0=tuple(theta) if (cfg.warm_start and theta is not None) else None,
        )
        t0 = time.perf_counter()
        try:
            fit = fit_model(cfg.model, data, opts)
        except HRKError as exc:
            trace.complete = False
            trace.events.append(f"step {step}: fit failed: {exc}")
            break
        fit_ms = 1e3 * (time.perf_counter() - t0)
        theta = fit.theta
        if fit.flags.get("fallback"):
            trace.events.append(f"step {step}: HRK fell back to RK weights")

        TX, TY = prob.test_set()
        new_rows = [r for r in trace.records if r.n == data.n]
        if len(TX):
            pred = predict(fit, TX)
            lo, hi = bm.gaussian_interval(pred.mean, np.sqrt(pred.variance), cfg.alpha, cfg.interval)
            err, isc = bm.rmse(pred.mean, TY), bm.interval_score(lo, hi, TY, cfg.alpha)
        else:
            err = isc = np.nan
        for r in new_rows:
            r.rmse, r.interval_score, r.fit_ms = err, isc, fit_ms
            r.jitter, r.status, r.theta = fit.sys.jitter, _status(fit), fit.theta.copy()

        if data.n >= cfg.budget:
            break
        step += 1
        cands, cidx = prob.candidates(data.X, derive_seed(cfg.seed, cfg.rep, step))
        if len(cands) == 0:
            trace.complete = False
            trace.events.append(f"step {step}: no candidates left")
            break
        i, u, score = alm_select(fit, cands)
        try:
            y = float(np.atleast_1d(prob.evaluate(u[None, :], None if cidx is None else cidx[i]))[0])
        except Exception as exc:  # noqa: BLE001
            trace.complete = False
            trace.events.append(f"step {step}: objective evaluation failed: {exc}")
            break
        data = data.augment(u, y)
        trace.records.append(StepRecord(step, data.n, u, prob.to_native(u), y, score))

    trace.data = Dataset(data.X, data.Y, prob.lower, prob.upper)
    return trace
