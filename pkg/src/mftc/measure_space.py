"""Particle ensembles: square-integrable random variables on an N-atom
uniform probability space, and the Hilbert / Wasserstein-2 geometry on them.

Particle ``i`` of one ensemble and particle ``i`` of another live on the same
sample-space atom, so index-wise pairing is the canonical coupling.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

log = logging.getLogger(__name__)

N_MAX_EXACT = 64


class ShapeError(ValueError):
    """Raised when ensembles have incompatible particle counts or dimensions."""


def sym_sum(a, axis=0):
    """Sum along ``axis`` in an order that depends only on the values.

    Sorting first makes reductions over particles exactly invariant under
    relabelling of the particles.
    """
    return np.sort(a, axis=axis).sum(axis=axis)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """N equal-weight points in R^n, stored as a read-only (N, n) array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ShapeError(f"points must be a non-empty (N, n) array, got shape {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @classmethod
    def zeros(cls, N: int, n: int) -> "ParticleEnsemble":
        return cls(np.zeros((N, n)))

    def __add__(self, other: "ParticleEnsemble") -> "ParticleEnsemble":
        _check_paired(self, other)
        return ParticleEnsemble(self.points + other.points)

    def __sub__(self, other: "ParticleEnsemble") -> "ParticleEnsemble":
        _check_paired(self, other)
        return ParticleEnsemble(self.points - other.points)

    def __mul__(self, scalar: float) -> "ParticleEnsemble":
        return ParticleEnsemble(float(scalar) * self.points)

    __rmul__ = __mul__

    def __neg__(self) -> "ParticleEnsemble":
        return ParticleEnsemble(-self.points)

    def __repr__(self) -> str:
        return f"ParticleEnsemble(N={self.N}, n={self.n})"

    def norm(self) -> float:
        return math.sqrt(inner_product(self, self))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j}" for j in range(self.n)])
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "ParticleEnsemble":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header != [f"x{j}" for j in range(len(header))]:
            raise ShapeError(f"unexpected ensemble header {header}")
        return cls(np.array([[float(v) for v in r] for r in body]))


@dataclass(frozen=True)
class TimeGrid:
    """M+1 equally spaced nodes covering [t0, T]."""

    t0: float
    T: float
    M: int

    def __post_init__(self):
        if not self.T > self.t0:
            raise ValueError(f"need T > t0, got t0={self.t0}, T={self.T}")
        if self.M < 2:
            raise ValueError(f"need M >= 2 intervals, got {self.M}")

    @property
    def nodes(self) -> np.ndarray:
        nodes = self.t0 + (self.T - self.t0) * np.arange(self.M + 1) / self.M
        nodes[-1] = self.T
        return nodes

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.M

    @property
    def horizon(self) -> float:
        return self.T - self.t0


def _check_paired(a: ParticleEnsemble, b: ParticleEnsemble) -> None:
    if a.N != b.N or a.n != b.n:
        raise ShapeError(f"ensembles not paired: ({a.N}, {a.n}) vs ({b.N}, {b.n})")


def inner_product(a: ParticleEnsemble, b: ParticleEnsemble) -> float:
    """((a, b)) = E[a . b] under the uniform law on the N atoms."""
    _check_paired(a, b)
    return float(sym_sum(np.einsum("ij,ij->i", a.points, b.points))) / a.N


def mean(a: ParticleEnsemble) -> np.ndarray:
    return sym_sum(a.points, axis=0) / a.N


def permute(a: ParticleEnsemble, perm: Sequence[int]) -> ParticleEnsemble:
    p = np.asarray(perm)
    if p.shape != (a.N,) or not np.array_equal(np.sort(p), np.arange(a.N)):
        raise ShapeError(f"not a permutation of {a.N} indices: {list(perm)}")
    return ParticleEnsemble(a.points[p])


class Matching(NamedTuple):
    distance: float
    perm: np.ndarray  # a[i] is matched to b[perm[i]]
    exact: bool


def matching_cost(a: np.ndarray, b: np.ndarray, perm: np.ndarray) -> float:
    """Mean squared displacement of the matching, exactly rounded.

    ``math.fsum`` makes the result independent of summation order, so two
    matchings pairing the same multiset of displacements give identical bits.
    """
    d = a - b[perm]
    return math.fsum(np.einsum("ij,ij->i", d, d).tolist()) / a.shape[0]


def _sort_matching(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # stable sort by value, ties by original index
    ia = np.argsort(a[:, 0], kind="stable")
    ib = np.argsort(b[:, 0], kind="stable")
    perm = np.empty(a.shape[0], dtype=int)
    perm[ia] = ib
    return perm


def _approximate_matching(a: np.ndarray, b: np.ndarray, sweeps: int = 20) -> np.ndarray:
    """Sort along the principal axis of the pooled points, then improve the
    matching with pairwise partner swaps until no swap helps (or ``sweeps``
    passes). Gives an upper bound on W2, not the infimum."""
    pooled = np.vstack([a, b])
    centred = pooled - pooled.mean(axis=0)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    axis = vt[0]
    perm = _sort_matching((a @ axis)[:, None], (b @ axis)[:, None])
    N = a.shape[0]
    for _ in range(sweeps):
        improved = False
        for i in range(N - 1):
            bi = b[perm[i]]
            # gain of swapping partners of i and every j > i
            cur = np.sum((a[i] - bi) ** 2) + np.sum((a[i + 1:] - b[perm[i + 1:]]) ** 2, axis=1)
            new = np.sum((a[i] - b[perm[i + 1:]]) ** 2, axis=1) + np.sum((a[i + 1:] - bi) ** 2, axis=1)
            gain = cur - new
            k = int(np.argmax(gain))
            if gain[k] > 1e-14:
                j = i + 1 + k
                perm[i], perm[j] = perm[j], perm[i]
                improved = True
        if not improved:
            break
    return perm


def optimal_matching(a: ParticleEnsemble, b: ParticleEnsemble, n_max: int = N_MAX_EXACT) -> Matching:
    """Optimal equal-weight coupling between two ensembles.

    In one dimension the monotone (sorted) matching is optimal and used at any
    N. Otherwise an exact assignment is solved for N <= n_max and an
    approximate matcher is used above it, with ``exact=False``.
    """
    _check_paired(a, b)
    x, y = a.points, b.points
    if a.n == 1:
        perm, exact = _sort_matching(x, y), True
    elif a.N <= n_max:
        cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
        rows, cols = linear_sum_assignment(cost)
        perm = np.empty(a.N, dtype=int)
        perm[rows] = cols
        exact = True
    else:
        perm, exact = _approximate_matching(x, y), False
        log.info("W2 for N=%d > %d uses the approximate matcher", a.N, n_max)
    return Matching(math.sqrt(matching_cost(x, y, perm)), perm, exact)


def wasserstein2(a: ParticleEnsemble, b: ParticleEnsemble, n_max: int = N_MAX_EXACT) -> float:
    return optimal_matching(a, b, n_max).distance
