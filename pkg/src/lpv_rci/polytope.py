"""Polytope geometry: H/V representations, exact vertex enumeration, volumes.

Polytopes here are small (dimension <= 4, a dozen or so facets), so vertices
are enumerated by brute force over active-constraint subsets and volumes are
obtained from a fan triangulation of the hull from an interior point.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

logger = logging.getLogger(__name__)

MERGE_TOL = 1e-9


class PolytopeError(ValueError):
    pass


class UnboundedPolytopeError(PolytopeError):
    pass


class EmptyPolytopeError(PolytopeError):
    pass


class DegenerateVolumeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PolytopeH:
    """Polytope ``{x : H x <= h}``.

    Use :meth:`band` for the 0-symmetric form ``-1 <= C x <= 1``, in which case
    ``C`` is kept so that callers can recover the band matrix.
    """

    H: np.ndarray
    h: np.ndarray
    C: np.ndarray | None = None

    @classmethod
    def band(cls, C) -> "PolytopeH":
        C = np.atleast_2d(np.asarray(C, dtype=float))
        ones = np.ones(C.shape[0])
        return cls(np.vstack([C, -C]), np.concatenate([ones, ones]), C)

    @classmethod
    def box(cls, lower, upper) -> "PolytopeH":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        eye = np.eye(len(lower))
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def is_symmetric_band(self) -> bool:
        return self.C is not None

    def contains(self, x, tol: float = 1e-9) -> bool:
        return contains(self, x, tol)


@dataclass(frozen=True)
class PolytopeV:
    """Polytope given as the convex hull of ``vertices`` (k x n)."""

    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        V = self.vertices
        scale = max(1.0, np.abs(V).max())
        return all(np.min(np.abs(V + v).max(axis=1)) <= tol * scale for v in V)

    def to_list(self) -> list[list[float]]:
        return self.vertices.tolist()


def _dedupe(points: list[np.ndarray], tol: float) -> np.ndarray:
    if not points:
        return np.empty((0, 0))
    P = np.array(points)
    diam = max(1.0, float(np.ptp(P, axis=0).max())) if len(P) > 1 else 1.0
    kept: list[np.ndarray] = []
    for p in P:
        if all(np.abs(p - q).max() > tol * diam for q in kept):
            kept.append(p)
    return np.array(kept)


def enumerate_vertices(P: PolytopeH, tol: float = 1e-9) -> PolytopeV:
    """Exact vertex set of a bounded H-polytope by active-set enumeration.

    Every ``n``-subset of rows is tried as the active set; the unique solution
    of the corresponding square system is kept when it satisfies all remaining
    inequalities within ``tol``.
    """
    H, h = P.H, P.h
    n = P.dim
    if P.C is not None and np.linalg.matrix_rank(P.C) < n:
        raise UnboundedPolytopeError("band matrix must have full column rank")
    if np.linalg.matrix_rank(H) < n:
        raise UnboundedPolytopeError("constraint matrix must have full column rank")
    found = []
    for rows in itertools.combinations(range(H.shape[0]), n):
        A = H[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12 * max(1.0, np.abs(A).max()) ** n:
            continue
        v = np.linalg.solve(A, h[list(rows)])
        if np.all(H @ v <= h + tol * np.maximum(1.0, np.abs(h))):
            found.append(v)
    if not found:
        raise EmptyPolytopeError("no vertices found; polytope empty or unbounded")
    V = _dedupe(found, MERGE_TOL)
    if P.C is None and not _bounded(H):
        raise UnboundedPolytopeError("polytope is unbounded")
    return PolytopeV(V)


def _bounded(H: np.ndarray) -> bool:
    # bounded iff the recession cone {d : H d <= 0} is {0}
    n = H.shape[1]
    for i in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -sign
            res = linprog(c, A_ub=H, b_ub=np.zeros(H.shape[0]),
                          bounds=[(-1, 1)] * n, method="highs")
            if res.status == 0 and -res.fun > 1e-9:
                return False
    return True


def symmetric_band_vertices(C) -> PolytopeV:
    """Vertices of ``{theta : -1 <= C theta <= 1}``."""
    return enumerate_vertices(PolytopeH.band(C))


def volume(V: PolytopeV) -> float:
    """Lebesgue volume of ``conv(V)``.

    The hull boundary is triangulated into simplicial facets and each facet is
    coned to the vertex centroid; the volume is the sum of the cone volumes.
    Degenerate (lower-dimensional) hulls return 0 with a warning.
    """
    P = V.vertices
    n = P.shape[1]
    if n == 1:
        return float(P.max() - P.min())
    centered = P - P.mean(axis=0)
    if len(P) <= n or np.linalg.matrix_rank(centered, tol=1e-12 * max(1.0, np.abs(P).max())) < n:
        warnings.warn("polytope is not full-dimensional; volume is 0",
                      DegenerateVolumeWarning, stacklevel=2)
        return 0.0
    hull = ConvexHull(P)
    center = P[hull.vertices].mean(axis=0)
    total = 0.0
    for simplex in hull.simplices:
        M = P[simplex] - center
        total += abs(np.linalg.det(M))
    return total / math.factorial(n)


def transform(V: PolytopeV, W) -> PolytopeV:
    """Image ``{W v}`` of the polytope under a nonsingular square map."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape != (V.dim, V.dim):
        raise PolytopeError(f"expected a {V.dim}x{V.dim} map, got {W.shape}")
    if abs(np.linalg.det(W)) <= 1e-12 * max(1.0, np.abs(W).max()) ** V.dim:
        raise PolytopeError("transformation matrix is singular")
    return PolytopeV(V.vertices @ W.T)


def contains(P: PolytopeH, x, tol: float = 1e-9, W=None) -> bool:
    """Membership test; with ``W`` given, tests ``x`` against the image ``W P``."""
    x = np.asarray(x, dtype=float)
    if W is not None:
        x = np.linalg.solve(np.asarray(W, dtype=float), x)
    return bool(np.all(P.H @ x <= P.h + tol))


def band_norm(C, theta) -> float:
    """``max |C theta|``; the set ``{theta : band_norm <= 1}`` is the band polytope."""
    return float(np.abs(np.asarray(C) @ np.asarray(theta)).max())


def in_convex_hull(points, x, tol: float = 1e-9) -> bool:
    """Whether ``x`` is a convex combination of the rows of ``points`` (LP feasibility)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    x = np.asarray(x, dtype=float)
    k = P.shape[0]
    if k == 1:
        return bool(np.abs(P[0] - x).max() <= tol)
    # min slack s.t. |P^T a - x| <= slack, sum a = 1, a >= 0
    n = P.shape[1]
    c = np.zeros(k + 1)
    c[-1] = 1.0
    A_ub = np.block([[P.T, -np.ones((n, 1))], [-P.T, -np.ones((n, 1))]])
    b_ub = np.concatenate([x, -x])
    A_eq = np.concatenate([np.ones(k), [0.0]])[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (k + 1), method="highs")
    return bool(res.status == 0 and res.fun <= tol)


def box_vertices(lower, upper) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    corners = itertools.product(*zip(lower, upper))
    return np.array(list(corners), dtype=float)
