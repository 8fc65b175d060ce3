"""Latin hypercube designs, space-filling down-sampling and ALM candidate sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidArgumentError, ParseError


@dataclass(frozen=True, eq=False)
class Design:
    points: np.ndarray
    provenance: str  # "lhd" | "downsampled" | "file"

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def random_lhd(m: int, p: int, seed) -> Design:
    """Random Latin hypercube: a permutation of strata per column, uniform within each."""
    if m < 1 or p < 1:
        raise InvalidArgumentError("need m >= 1 and p >= 1")
    rng = np.random.default_rng(seed)
    strata = np.column_stack([rng.permutation(m) for _ in range(p)])
    pts = (strata + rng.uniform(size=(m, p))) / m
    return Design(pts, "lhd")


def downsample(d: Design, m: int, seed=None) -> Design:
    """Greedy farthest-point (maximin) subset of size ``m``.

    The point closest to the centroid anchors the traversal: ``m = 1``
    returns it, otherwise the first pick is the point farthest from the anchor
    and every later pick is the point farthest from those already chosen.
    Ties go to the lowest index, so the result is deterministic; ``seed`` is
    accepted only for interface symmetry.
    """
    X = d.points
    N = X.shape[0]
    if m > N:
        raise InvalidArgumentError(f"cannot pick {m} points out of {N}")
    if m < 1:
        raise InvalidArgumentError("m must be positive")
    if m == N:
        return Design(X.copy(), "downsampled")
    anchor = int(np.argmin(np.sum((X - X.mean(axis=0)) ** 2, axis=1)))
    if m == 1:
        return Design(X[[anchor]].copy(), "downsampled")
    chosen = _farthest_point(np.ascontiguousarray(X.T), anchor, m)
    return Design(X[chosen].copy(), "downsampled")


@numba.njit(cache=True)
def _farthest_point(XT, anchor, m):
    p, N = XT.shape
    dmin = np.empty(N)
    # first pick: farthest from the anchor
    nxt, best = 0, -1.0
    for i in range(N):
        s = 0.0
        for k in range(p):
            t = XT[k, i] - XT[k, anchor]
            s += t * t
        if s > best:
            nxt, best = i, s
    chosen = np.empty(m, np.int64)
    for j in range(N):
        dmin[j] = np.inf
    for c in range(m):
        chosen[c] = nxt
        cur = nxt
        nxt, best = 0, -1.0
        for i in range(N):
            s = 0.0
            for k in range(p):
                t = XT[k, i] - XT[k, cur]
                s += t * t
            if s < dmin[i]:
                dmin[i] = s
            if dmin[i] > best:
                nxt, best = i, dmin[i]
    return chosen


def candidate_size(p: int) -> int:
    return 100 * (p + 1) ** 2


def candidate_set(p: int, seed) -> Design:
    """``100 (p+1)^2`` space-filling candidates thinned from an LHD ten times larger."""
    if p < 1:
        raise InvalidArgumentError("p must be positive")
    big = random_lhd(10 * candidate_size(p), p, seed)
    return downsample(big, candidate_size(p))


def write_csv(path, d: Design):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(d.dim)])
        for row in d.points:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> Design:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != [f"x{j + 1}" for j in range(len(header))]:
        raise ParseError(f"{path}: expected header x1,...,xp, got {header}")
    pts = []
    for i, row in enumerate(rows[1:], start=2):
        try:
            pts.append([float(v) for v in row])
        except ValueError as exc:
            raise ParseError(f"{path}: row {i}: {exc}") from None
    arr = np.array(pts, dtype=float).reshape(-1, len(header))
    if np.any(arr < 0) or np.any(arr > 1):
        raise ParseError(f"{path}: design coordinates must lie in [0, 1]")
    return Design(arr, "file")
