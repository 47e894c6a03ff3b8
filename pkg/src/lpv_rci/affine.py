"""Sparse affine matrix expressions over a flat vector of scalar decision parameters.

An :class:`AffineExpr` of shape ``(r, c)`` represents ``reshape(A @ x + b, (r, c))``
where ``x`` is the global parameter vector, ``A`` is a sparse ``(r*c, nvars)``
matrix and entries are flattened in row-major order. Only operations that keep
expressions affine are provided (constant left/right products, Kronecker
products with constants, block assembly, transposition).
"""
from __future__ import annotations

from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

ArrayLike = Union[np.ndarray, float, int]


def _pad(coef: sp.csr_matrix, nvars: int) -> sp.csr_matrix:
    if coef.shape[1] == nvars:
        return coef
    if coef.shape[1] > nvars:
        raise ValueError("cannot shrink parameter space")
    coef = coef.tocsr()
    return sp.csr_matrix((coef.data, coef.indices, coef.indptr),
                         shape=(coef.shape[0], nvars))


def _remap_rows(coef: sp.spmatrix, new_rows: np.ndarray, size: int,
                scale: np.ndarray | None = None) -> sp.coo_matrix:
    coo = coef.tocoo()
    data = coo.data if scale is None else coo.data * scale[coo.row]
    return sp.coo_matrix((data, (new_rows[coo.row], coo.col)),
                         shape=(size, coef.shape[1]))


class AffineExpr:
    """Matrix-valued affine function of the decision parameters."""

    __array_ufunc__ = None  # ndarray (op) expr defers to the reflected method

    def __init__(self, shape: tuple[int, int], coef: sp.spmatrix, const: np.ndarray):
        r, c = shape
        if coef.shape[0] != r * c or const.shape != (r * c,):
            raise ValueError("coefficient / constant sizes do not match shape")
        self.shape = (int(r), int(c))
        self.coef = sp.csr_matrix(coef)
        self.const = np.asarray(const, dtype=float)

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, value: ArrayLike, nvars: int = 0) -> "AffineExpr":
        arr = np.atleast_2d(np.asarray(value, dtype=float))
        if arr.ndim != 2:
            raise ValueError("only matrices are supported")
        return cls(arr.shape, sp.csr_matrix((arr.size, nvars)), arr.reshape(-1).copy())

    @classmethod
    def zeros(cls, shape: tuple[int, int], nvars: int = 0) -> "AffineExpr":
        return cls.constant(np.zeros(shape), nvars)

    @property
    def nvars(self) -> int:
        return self.coef.shape[1]

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def is_constant(self) -> bool:
        return self.coef.nnz == 0

    def value(self, x: np.ndarray | None = None) -> np.ndarray:
        """Evaluate at parameter vector ``x`` (shorter vectors are zero-padded)."""
        flat = self.const.copy()
        if self.nvars:
            xv = np.zeros(self.nvars)
            if x is not None:
                x = np.asarray(x, dtype=float)
                k = min(len(x), self.nvars)
                xv[:k] = x[:k]
            flat += self.coef @ xv
        return flat.reshape(self.shape)

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other) -> "AffineExpr":
        if isinstance(other, AffineExpr):
            return other
        arr = np.asarray(other, dtype=float)
        if arr.ndim == 0:
            arr = np.full(self.shape, float(arr))
        return AffineExpr.constant(arr)

    def __add__(self, other) -> "AffineExpr":
        other = self._coerce(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        nv = max(self.nvars, other.nvars)
        return AffineExpr(self.shape, _pad(self.coef, nv) + _pad(other.coef, nv),
                          self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(self.shape, -self.coef, -self.const)

    def __sub__(self, other) -> "AffineExpr":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "AffineExpr":
        return self._coerce(other) + (-self)

    def __mul__(self, scalar: float) -> "AffineExpr":
        if not np.isscalar(scalar):
            raise TypeError("only scalar multiplication; use @ or kron for matrices")
        return AffineExpr(self.shape, self.coef * float(scalar), self.const * float(scalar))

    __rmul__ = __mul__

    def __matmul__(self, right: np.ndarray) -> "AffineExpr":
        if isinstance(right, AffineExpr):
            raise TypeError("product of two affine expressions is not affine")
        R = np.atleast_2d(np.asarray(right, dtype=float))
        if np.ndim(right) == 1:
            R = R.T
        r, c = self.shape
        if R.shape[0] != c:
            raise ValueError(f"shape mismatch {self.shape} @ {R.shape}")
        op = sp.kron(sp.identity(r, format="csr"), sp.csr_matrix(R.T), format="csr")
        return AffineExpr((r, R.shape[1]), op @ self.coef, op @ self.const)

    def __rmatmul__(self, left: np.ndarray) -> "AffineExpr":
        L = np.atleast_2d(np.asarray(left, dtype=float))
        r, c = self.shape
        if L.shape[1] != r:
            raise ValueError(f"shape mismatch {L.shape} @ {self.shape}")
        op = sp.kron(sp.csr_matrix(L), sp.identity(c, format="csr"), format="csr")
        return AffineExpr((L.shape[0], c), op @ self.coef, op @ self.const)

    @property
    def T(self) -> "AffineExpr":
        r, c = self.shape
        # entry (i, j) moves to flat position j*r + i
        i, j = np.divmod(np.arange(r * c), c)
        perm = j * r + i
        coef = _remap_rows(self.coef, perm, r * c).tocsr()
        const = np.empty(r * c)
        const[perm] = self.const
        return AffineExpr((c, r), coef, const)

    def scalar_times(self, matrix: ArrayLike) -> "AffineExpr":
        """Product of a 1x1 expression with a constant matrix."""
        if self.shape != (1, 1):
            raise ValueError("scalar_times requires a 1x1 expression")
        return kron(np.asarray(matrix, dtype=float), self)

    def sum(self) -> "AffineExpr":
        ones = np.ones((1, self.size))
        return AffineExpr((1, 1), sp.csr_matrix(ones) @ self.coef, ones @ self.const)

    def __repr__(self) -> str:
        return f"AffineExpr(shape={self.shape}, nvars={self.nvars}, nnz={self.coef.nnz})"


def as_expr(value) -> AffineExpr:
    return value if isinstance(value, AffineExpr) else AffineExpr.constant(value)


def kron(a, b) -> AffineExpr:
    """Kronecker product where at most one factor is a non-constant expression."""
    if isinstance(a, AffineExpr) and isinstance(b, AffineExpr):
        if a.is_constant():
            a = a.value()
        elif b.is_constant():
            b = b.value()
        else:
            raise TypeError("kron of two non-constant expressions is not affine")
    if isinstance(a, AffineExpr):
        E, K, expr_first = a, np.atleast_2d(np.asarray(b, dtype=float)), True
    else:
        E, K, expr_first = as_expr(b), np.atleast_2d(np.asarray(a, dtype=float)), False
    er, ec = E.shape
    kr, kc = K.shape
    R, Cc = er * kr, ec * kc
    i, j = np.divmod(np.arange(er * ec), ec)
    rows, data_scale, src = [], [], []
    for k, l in zip(*np.nonzero(K)):
        if expr_first:
            new = (i * kr + k) * Cc + (j * kc + l)
        else:
            new = (k * er + i) * Cc + (l * ec + j)
        rows.append(new)
        src.append(np.arange(er * ec))
        data_scale.append(np.full(er * ec, K[k, l]))
    if not rows:
        return AffineExpr.zeros((R, Cc), E.nvars)
    rows = np.concatenate(rows)
    src = np.concatenate(src)
    scale = np.concatenate(data_scale)
    op = sp.csr_matrix((scale, (rows, src)), shape=(R * Cc, er * ec))
    return AffineExpr((R, Cc), op @ E.coef, op @ E.const)


def bmat(blocks: Sequence[Sequence[object]]) -> AffineExpr:
    """Assemble a block matrix; ``None`` entries are zero blocks.

    Every block row must contain at least one sized entry fixing its height and
    every block column one entry fixing its width.
    """
    nbr = len(blocks)
    nbc = len(blocks[0])
    heights = [None] * nbr
    widths = [None] * nbc
    grid = [[None if b is None else as_expr(b) for b in row] for row in blocks]
    for bi, row in enumerate(grid):
        if len(row) != nbc:
            raise ValueError("ragged block structure")
        for bj, b in enumerate(row):
            if b is None:
                continue
            h, w = b.shape
            if heights[bi] not in (None, h) or widths[bj] not in (None, w):
                raise ValueError(f"inconsistent block size at ({bi}, {bj})")
            heights[bi], widths[bj] = h, w
    if None in heights or None in widths:
        raise ValueError("block sizes undetermined")
    r0 = np.concatenate([[0], np.cumsum(heights)])
    c0 = np.concatenate([[0], np.cumsum(widths)])
    R, Cc = int(r0[-1]), int(c0[-1])
    nv = max((b.nvars for row in grid for b in row if b is not None), default=0)
    coef = sp.csr_matrix((R * Cc, nv))
    const = np.zeros(R * Cc)
    parts = []
    for bi, row in enumerate(grid):
        for bj, b in enumerate(row):
            if b is None:
                continue
            h, w = b.shape
            a, c = np.divmod(np.arange(h * w), w)
            new = (r0[bi] + a) * Cc + (c0[bj] + c)
            parts.append(_remap_rows(_pad(b.coef, nv), new, R * Cc))
            const[new] = b.const
    if parts:
        coef = sp.csr_matrix(sum(p.tocsr() for p in parts))
    return AffineExpr((R, Cc), coef, const)


def sym_bmat(upper: Sequence[Sequence[object]]) -> AffineExpr:
    """Symmetric block matrix from its upper block triangle.

    Entries below the block diagonal are ignored and replaced by transposes of
    their mirror blocks; diagonal blocks must be symmetric by construction.
    """
    k = len(upper)
    grid: list[list[object]] = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(i, k):
            b = upper[i][j]
            if b is None:
                continue
            grid[i][j] = as_expr(b)
            if j > i:
                grid[j][i] = as_expr(b).T
    return bmat(grid)


def vstack(items: Sequence[object]) -> AffineExpr:
    return bmat([[it] for it in items])


def hstack(items: Sequence[object]) -> AffineExpr:
    return bmat([list(items)])


def diag_congruence(F: np.ndarray, vec: AffineExpr) -> AffineExpr:
    """``F.T @ diag(vec) @ F`` for a constant ``F`` (q x c) and a q x 1 expression."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    q, c = F.shape
    if vec.shape != (q, 1):
        raise ValueError("vector length must match rows of F")
    # entry (a, b) = sum_r F[r, a] F[r, b] vec_r
    kr = np.einsum("ra,rb->abr", F, F).reshape(c * c, q)
    op = sp.csr_matrix(kr)
    return AffineExpr((c, c), op @ vec.coef, op @ vec.const)
