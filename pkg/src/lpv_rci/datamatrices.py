"""Data matrices of a measured trajectory and the admissible model set they define.

With ``M = [A^1 ... A^s B]`` (n x (ns+m)), every model consistent with the data
and the disturbance bound satisfies

    -1 + d <= Z vec(M) <= 1 + d,    Z = Xpu^T kron H_w,   d = vec(H_w X+)

where ``vec`` stacks columns.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .trajectory import ConstraintSets, Trajectory

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-8
MEMBERSHIP_TOL = 1e-9


def vec(A: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(A, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(rows, -1, order="F")


def numerical_rank(A: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank with singular values below ``rtol * sigma_max`` treated as zero."""
    A = np.atleast_2d(A)
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


@dataclass(frozen=True)
class DataMatrices:
    Xplus: np.ndarray
    Xpu: np.ndarray
    Z: np.ndarray
    d: np.ndarray
    T: int
    n: int
    m: int
    s: int
    n_w: int

    @property
    def degenerate(self) -> bool:
        return self.T == 0

    @property
    def model_shape(self) -> tuple[int, int]:
        return self.n, self.n * self.s + self.m


def regressor(x, p, u) -> np.ndarray:
    """Column ``[p kron x; u]`` of the data matrix."""
    return np.concatenate([np.kron(p, x), np.atleast_1d(u)])


def build(traj: Trajectory, constraints: ConstraintSets) -> DataMatrices:
    H_w = constraints.H_w
    n, T = traj.n, traj.T
    if H_w.shape[1] != n:
        raise ValueError(f"H_w acts on dimension {H_w.shape[1]}, trajectory has n={n}")
    m = traj.m if T else constraints.m
    s = traj.s if T else constraints.s
    Xplus = traj.states[1:].T
    if T:
        Xpu = np.column_stack([regressor(traj.states[k], traj.scheduling[k], traj.inputs[k])
                               for k in range(T)])
    else:
        Xpu = np.zeros((n * s + m, 0))
    Z = np.kron(Xpu.T, H_w)
    d = vec(H_w @ Xplus) if T else np.zeros(0)
    return DataMatrices(Xplus, Xpu, Z, d, T, n, m, s, H_w.shape[0])


def vectorize_check(A, B, C, D, tol: float = 1e-10) -> bool:
    """Check ``(C^T kron A) vec(B) == vec(D)``; true exactly when ``A B C == D``."""
    A, B, C, D = (np.atleast_2d(np.asarray(X, dtype=float)) for X in (A, B, C, D))
    if A.shape[1] != B.shape[0] or B.shape[1] != C.shape[0]:
        raise ValueError("A, B, C are not conformable")
    if D.shape != (A.shape[0], C.shape[1]):
        raise ValueError("D must have shape rows(A) x cols(C)")
    lhs = np.kron(C.T, A) @ vec(B)
    return bool(np.max(np.abs(lhs - vec(D)), initial=0.0) <= tol)


@dataclass(frozen=True)
class InformativityReport:
    rank_Xpu: int
    required_rank: int
    H_w_rank: int
    n: int
    T: int

    @property
    def full_row_rank(self) -> bool:
        return self.rank_Xpu == self.required_rank

    @property
    def H_w_full_column_rank(self) -> bool:
        return self.H_w_rank == self.n

    @property
    def bounded(self) -> bool:
        return self.full_row_rank and self.H_w_full_column_rank

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(full_row_rank=self.full_row_rank,
                   H_w_full_column_rank=self.H_w_full_column_rank,
                   bounded=self.bounded)
        return out


def informativity(dm: DataMatrices, constraints: ConstraintSets) -> InformativityReport:
    """Rank conditions under which the admissible model set is a bounded polyhedron."""
    return InformativityReport(
        rank_Xpu=numerical_rank(dm.Xpu),
        required_rank=dm.n * dm.s + dm.m,
        H_w_rank=numerical_rank(constraints.H_w),
        n=dm.n,
        T=dm.T,
    )


def membership(dm: DataMatrices, M, tol: float = MEMBERSHIP_TOL) -> bool:
    """Whether ``M`` lies in the admissible model set (vectorized form)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != dm.model_shape:
        raise ValueError(f"model matrix must be {dm.model_shape}, got {M.shape}")
    if dm.degenerate:
        logger.warning("membership test on an empty data set is vacuous")
        return True
    return bool(np.all(np.abs(dm.Z @ vec(M) - dm.d) <= 1.0 + tol))


def residual_membership(traj: Trajectory, H_w, M, tol: float = MEMBERSHIP_TOL) -> bool:
    """Same test written on the one-step residuals ``x_{k+1} - M [p_k kron x_k; u_k]``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    H_w = np.atleast_2d(H_w)
    for k in range(traj.T):
        r = traj.states[k + 1] - M @ regressor(traj.states[k], traj.scheduling[k], traj.inputs[k])
        if np.any(np.abs(H_w @ r) > 1.0 + tol):
            return False
    return True
