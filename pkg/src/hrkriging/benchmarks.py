"""Test functions and accuracy metrics.

The standard suite follows the formulas published in the Virtual Library of
Simulation Experiments (S. Surjanovic and D. Bingham,
https://www.sfu.ca/~ssurjano/), with the per-function primary references
noted on each evaluator. All evaluators take an ``(m, p)`` array of native
inputs and return a length-``m`` vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm

from .errors import InvalidArgumentError, NotFoundError


@dataclass(frozen=True, eq=False)
class TestFunction:
    __test__ = False  # keep pytest from collecting this class

    id: str
    lower: np.ndarray
    upper: np.ndarray
    evaluator: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    @property
    def p(self) -> int:
        return len(self.lower)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.p:
            raise InvalidArgumentError(f"{self.id} takes {self.p} inputs, got {x.shape[1]}")
        tol = 1e-12 * (self.upper - self.lower)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            raise InvalidArgumentError(f"input outside the {self.id} domain")
        y = self.evaluator(x)
        return float(y[0]) if single else y

    def from_unit(self, u):
        return self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)

    def on_unit(self, u):
        """Evaluate at unit-cube points."""
        return self(np.clip(self.from_unit(u), self.lower, self.upper))


def _oscillator(x):
    t = x[:, 0]
    return np.exp(-6.0 * t) * np.cos(6.0 * np.pi * t)


def _gramacy_lee(x):
    x1, x2 = x[:, 0], x[:, 1]
    return x1 * np.exp(-(x1**2) - x2**2)


def _borehole(x):
    # Morris, Mitchell and Ylvisaker (1993)
    rw, r, Tu, Hu, Tl, Hl, L, Kw = x.T
    lnr = np.log(r / rw)
    return 2 * np.pi * Tu * (Hu - Hl) / (lnr * (1 + 2 * L * Tu / (lnr * rw**2 * Kw) + Tu / Tl))


def _piston(x):
    # Kenett and Zacks (1998); output is the cycle time in seconds
    M, S, V0, k, P0, Ta, T0 = x.T
    A = P0 * S + 19.62 * M - k * V0 / S
    V = S / (2 * k) * (np.sqrt(A**2 + 4 * k * P0 * V0 * Ta / T0) - A)
    return 2 * np.pi * np.sqrt(M / (k + S**2 * P0 * V0 * Ta / (T0 * V**2)))


def _otl_circuit(x):
    # Ben-Ari and Steinberg (2007); midpoint voltage
    Rb1, Rb2, Rf, Rc1, Rc2, beta = x.T
    Vb1 = 12 * Rb2 / (Rb1 + Rb2)
    den = beta * (Rc2 + 9) + Rf
    return (
        (Vb1 + 0.74) * beta * (Rc2 + 9) / den
        + 11.35 * Rf / den
        + 0.74 * Rf * beta * (Rc2 + 9) / (den * Rc1)
    )


def _dette_pepelyshev(x):
    # Dette and Pepelyshev (2010), 8-dimensional function
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    y = 4 * (x1 - 2 + 8 * x2 - 8 * x2**2) ** 2 + (3 - 4 * x2) ** 2
    y += 16 * np.sqrt(x3 + 1) * (2 * x3 - 1) ** 2
    partial = np.cumsum(x[:, 2:], axis=1)  # column j holds x3 + ... + x_{j+3}
    for i in range(4, 9):
        y += i * np.log(1 + partial[:, i - 3])
    return y


def _cantilever_beam(x):
    # Eldred et al. (2007) cantilever: tip displacement, L = 100 in, E = 2.9e7 psi
    w, t, X, Y = x.T
    L, E = 100.0, 2.9e7
    return 4 * L**3 / (E * w * t) * np.sqrt((Y / t**2) ** 2 + (X / w**2) ** 2)


def _tf(id, lower, upper, f, description):
    return TestFunction(id, np.array(lower, dtype=float), np.array(upper, dtype=float), f, description)


REGISTRY = {
    "oscillator": _tf("oscillator", [0.0], [1.0], _oscillator,
                      "damped oscillation exp(-6x) cos(6 pi x)"),
    "gramacy_lee": _tf("gramacy_lee", [-2.0, -2.0], [4.0, 4.0], _gramacy_lee,
                       "x1 exp(-x1^2 - x2^2)"),
    "borehole": _tf("borehole",
                    [0.05, 100, 63070, 990, 63.1, 700, 1120, 9855],
                    [0.15, 50000, 115600, 1110, 116, 820, 1680, 12045],
                    _borehole, "water flow through a borehole"),
    "piston": _tf("piston",
                  [30, 0.005, 0.002, 1000, 90000, 290, 340],
                  [60, 0.020, 0.010, 5000, 110000, 296, 360],
                  _piston, "piston cycle time"),
    "otl_circuit": _tf("otl_circuit",
                       [50, 25, 0.5, 1.2, 0.25, 50],
                       [150, 70, 3, 2.5, 1.2, 300],
                       _otl_circuit, "output transformerless push-pull circuit"),
    "dette_pepelyshev": _tf("dette_pepelyshev", [0.0] * 8, [1.0] * 8, _dette_pepelyshev,
                            "8-d curved function with log terms"),
    "cantilever_beam": _tf("cantilever_beam",
                           [1.0, 1.0, 200.0, 700.0],
                           [4.0, 4.0, 800.0, 1300.0],
                           _cantilever_beam, "cantilever beam tip displacement"),
}

STANDARD_SUITE = ("borehole", "piston", "otl_circuit", "dette_pepelyshev", "cantilever_beam")


def get_function(id: str) -> TestFunction:
    try:
        return REGISTRY[id]
    except KeyError:
        raise NotFoundError(f"unknown test function {id!r}; known: {sorted(REGISTRY)}") from None


standard_suite = get_function


def oscillator(x) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError("oscillator is defined on [0, 1]")
    return float(np.exp(-6.0 * x) * np.cos(6.0 * np.pi * x))


def gramacy_lee(x1, x2) -> float:
    if not (-2.0 <= x1 <= 4.0 and -2.0 <= x2 <= 4.0):
        raise InvalidArgumentError("gramacy_lee is defined on [-2, 4]^2")
    return float(x1 * np.exp(-(x1**2) - x2**2))


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise InvalidArgumentError("pred and truth need equal, non-zero lengths")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def interval_score(l, u, t, alpha: float = 0.05) -> float:
    """Mean interval score of central ``(1 - alpha)`` intervals ``[l, u]`` at truths ``t``."""
    l, u, t = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (l, u, t))
    if not (l.shape == u.shape == t.shape) or l.size == 0:
        raise InvalidArgumentError("l, u and t need equal, non-zero lengths")
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError("alpha must be in (0, 1)")
    if np.any(l > u):
        raise InvalidArgumentError("interval with l > u")
    penalty = np.maximum(l - t, 0.0) + np.maximum(t - u, 0.0)
    return float(np.mean((u - l) + 2.0 / alpha * penalty))


def gaussian_interval(mean, sd, alpha: float = 0.05, rule: str = "quantile"):
    """Central interval ``mean -/+ z sd``; ``rule="2s"`` uses ``z = 2``."""
    z = 2.0 if rule == "2s" else float(norm.ppf(1.0 - alpha / 2.0))
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    return mean - z * sd, mean + z * sd
