"""Gaussian correlation kernel, correlation systems and the Perron vector.

Everything here works on the unit-cube scale; lengthscales are expressed in
that scale too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DuplicatePointError,
    IllConditionedError,
    InvalidArgumentError,
    IterationLimitError,
)

JITTER_START = 1e-10
JITTER_CAP = 1e-4
JITTER_FACTOR = 10.0
DUPLICATE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Anisotropic Gaussian correlation ``exp(-sum((u - v)**2 / theta**2))``."""

    lengthscales: np.ndarray
    jitter: float = 0.0

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        if theta.ndim != 1 or theta.size == 0:
            raise InvalidArgumentError("lengthscales must be a non-empty vector")
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise InvalidArgumentError(f"lengthscales must be positive, got {theta}")
        if not (0.0 <= self.jitter <= JITTER_CAP):
            raise InvalidArgumentError(f"jitter must lie in [0, {JITTER_CAP}]")
        theta.setflags(write=False)
        object.__setattr__(self, "lengthscales", theta)

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def with_jitter(self, jitter: float) -> "KernelSpec":
        return KernelSpec(self.lengthscales, jitter)


def _check_dim(a: np.ndarray, k: KernelSpec, what: str):
    if a.shape[-1] != k.dim:
        raise InvalidArgumentError(
            f"{what} has dimension {a.shape[-1]}, kernel expects {k.dim}"
        )


def gaussian_correlation(u, v, k: KernelSpec) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != v.shape:
        raise InvalidArgumentError(f"dimension mismatch: {u.shape} vs {v.shape}")
    _check_dim(u, k, "point")
    return float(np.exp(-np.sum(((u - v) / k.lengthscales) ** 2)))


def correlation_matrix(A, B, k: KernelSpec) -> np.ndarray:
    """Cross-correlation matrix between the rows of ``A`` and ``B`` (no jitter)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    _check_dim(A, k, "A")
    _check_dim(B, k, "B")
    As = A / k.lengthscales
    Bs = B / k.lengthscales
    # explicit differences keep the diagonal exactly 1 and the matrix symmetric
    d2 = np.zeros((As.shape[0], Bs.shape[0]))
    for j in range(k.dim):
        d2 += (As[:, j, None] - Bs[None, :, j]) ** 2
    return np.exp(-d2)


def min_pairwise_distance(X) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 2:
        return np.inf
    d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    d2[np.diag_indices(n)] = np.inf
    return float(np.sqrt(d2.min()))


@dataclass(frozen=True, eq=False)
class CorrelationSystem:
    """Correlation matrix of a design together with its Cholesky factor.

    ``R`` already contains the jitter on its diagonal; ``kernel.jitter``
    records the amount that was needed.
    """

    X: np.ndarray
    kernel: KernelSpec
    R: np.ndarray
    chol: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def jitter(self) -> float:
        return self.kernel.jitter

    @property
    def Rtilde(self) -> np.ndarray:
        return np.hstack([np.ones((self.n, 1)), self.R])

    @property
    def logdet(self) -> float:
        if "logdet" not in self._cache:
            self._cache["logdet"] = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        return self._cache["logdet"]

    @property
    def Rinv_ones(self) -> np.ndarray:
        if "Rinv_ones" not in self._cache:
            self._cache["Rinv_ones"] = solve_spd(self, np.ones(self.n))
        return self._cache["Rinv_ones"]


def build_system(X, k: KernelSpec) -> CorrelationSystem:
    """Assemble and factor the correlation matrix of design ``X``.

    The diagonal is inflated by ``max(k.jitter, 1e-10)`` and the jitter is
    multiplied by ten until the Cholesky factorization succeeds, up to 1e-4.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise InvalidArgumentError("a correlation system needs at least 2 points")
    _check_dim(X, k, "design")
    if min_pairwise_distance(X) <= DUPLICATE_TOL:
        raise DuplicatePointError("design contains duplicate rows")
    R0 = correlation_matrix(X, X, k)
    jitter = max(k.jitter, JITTER_START)
    while True:
        R = R0 + jitter * np.eye(n)
        try:
            L = np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            L = None
        if L is not None and np.all(np.isfinite(L)):
            break
        if jitter >= JITTER_CAP:
            raise IllConditionedError(
                f"Cholesky failed with jitter at the cap {JITTER_CAP:g}"
            )
        jitter = min(jitter * JITTER_FACTOR, JITTER_CAP)
    X = X.copy()
    X.setflags(write=False)
    R.setflags(write=False)
    L.setflags(write=False)
    return CorrelationSystem(X=X, kernel=k.with_jitter(jitter), R=R, chol=L)


def cross_corr(x, X, k: KernelSpec) -> np.ndarray:
    """``r(x)``; a 2-d ``x`` gives one row per point."""
    x = np.asarray(x, dtype=float)
    r = correlation_matrix(np.atleast_2d(x), X, k)
    return r[0] if x.ndim <= 1 else r


def solve_spd(sys: CorrelationSystem, b) -> np.ndarray:
    return scipy.linalg.cho_solve((sys.chol, True), np.asarray(b, dtype=float))


def perron_eigenvector(M, tol: float = 1e-10, max_iter: int = 10_000):
    """Dominant eigenpair of a symmetric nonnegative matrix by power iteration.

    Returns ``(v, lam)`` with ``v`` of unit norm and entries summing to a
    positive number. Raises :class:`IterationLimitError` (carrying the last
    iterate) when the relative change stays above ``tol``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError("M must be square")
    if np.min(M) < -1e-12:
        raise InvalidArgumentError("M must be entrywise nonnegative")
    m = M.shape[0]
    v = np.full(m, 1.0 / np.sqrt(m))
    lam = float(v @ M @ v)
    for _ in range(max_iter):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise InvalidArgumentError("M is the zero matrix")
        w /= norm
        if np.sum(w) < 0:
            w = -w
        delta = np.max(np.abs(w - v))
        v = w
        lam_new = float(v @ M @ v)
        converged = delta <= tol and abs(lam_new - lam) <= tol * abs(lam_new)
        lam = lam_new
        if converged:
            return v, lam
    raise IterationLimitError(
        f"power iteration did not converge in {max_iter} iterations", last=v
    )


def perron_eigh(M):
    """Fallback dominant eigenpair via a dense symmetric eigensolver."""
    vals, vecs = np.linalg.eigh(np.asarray(M, dtype=float))
    v = vecs[:, -1]
    if np.sum(v) < 0:
        v = -v
    v = np.clip(v, 0.0, None)
    return v / np.linalg.norm(v), float(vals[-1])
