"""Independent reference computations used by the tests.

Everything here is written with plain numpy loops and slicing so it shares no
code path with the package under test.
"""
from itertools import combinations, product

import numpy as np


def vec_f(A):
    """Column-stacking vectorization by explicit loops."""
    A = np.atleast_2d(A)
    return np.array([A[i, j] for j in range(A.shape[1]) for i in range(A.shape[0])])


def regressor_cols(states, inputs, scheduling):
    """Columns [p_k kron x_k; u_k] built entry by entry."""
    T = len(inputs)
    n = states.shape[1]
    s = scheduling.shape[1]
    m = inputs.shape[1]
    out = np.zeros((n * s + m, T))
    for k in range(T):
        for l in range(s):
            for i in range(n):
                out[l * n + i, k] = scheduling[k, l] * states[k, i]
        out[n * s:, k] = inputs[k]
    return out


def dense_G(W, N, p, theta):
    """n x (ns+m)n matrix with G vec(M) = M y, y = [p kron W theta; N (p kron theta)]."""
    n = W.shape[0]
    s = len(p)
    pt = np.array([p[l] * theta[i] for l in range(s) for i in range(n)])
    y = np.concatenate([np.concatenate([p[l] * (W @ theta) for l in range(s)]), N @ pt])
    G = np.zeros((n, len(y) * n))
    for c, yc in enumerate(y):
        G[:, c * n:(c + 1) * n] = yc * np.eye(n)
    return G


def dense_invariance_block(Z, d, H_w, W, N, p, theta, X, V, phi, lam, gam):
    """Five-by-five block matrix filled slice by slice from the printed layout.

    ``lam`` and ``gam`` are the diagonals of the multipliers.
    """
    n = W.shape[0]
    nz = Z.shape[1]
    Lam = np.diag(lam)
    Gam = np.diag(gam)
    G = dense_G(W, N, p, theta)
    r = phi - lam.sum() - gam.sum() + d @ Lam @ d
    sizes = [1, nz, n, n, n]
    off = np.concatenate([[0], np.cumsum(sizes)])
    B = np.zeros((off[-1], off[-1]))

    def put(i, j, blk):
        B[off[i]:off[i + 1], off[j]:off[j + 1]] = blk
        if i != j:
            B[off[j]:off[j + 1], off[i]:off[i + 1]] = np.atleast_2d(blk).T

    put(0, 0, [[r]])
    put(0, 1, (-(d @ Lam @ Z))[None, :])
    put(1, 1, Z.T @ Lam @ Z)
    put(1, 3, G.T)
    put(2, 2, H_w.T @ Gam @ H_w)
    put(2, 3, np.eye(n))
    put(3, 3, V + V.T)
    put(3, 4, V.T)
    put(4, 4, X)
    return B


def xi_form_block(Z, d, H_w, W, N, p, theta, X, V, phi, lam, gam):
    """Four-block form with (4,4) = V + V' - V' X^-1 V (before the Schur step)."""
    B = dense_invariance_block(Z, d, H_w, W, N, p, theta, X, V, phi, lam, gam)
    n = W.shape[0]
    k = B.shape[0] - n
    out = B[:k, :k].copy()
    out[-n:, -n:] -= V.T @ np.linalg.solve(X, V)
    return out


def brute_force_vertices(C, tol=1e-9):
    """Vertices of {|C theta| <= 1} from every n-subset of the 2 n_c half-spaces."""
    C = np.atleast_2d(C)
    n = C.shape[1]
    H = np.vstack([C, -C])
    pts = []
    for rows in combinations(range(H.shape[0]), n):
        A = H[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        v = np.linalg.solve(A, np.ones(n))
        if np.all(H @ v <= 1 + tol) and not any(np.allclose(v, q, atol=1e-9) for q in pts):
            pts.append(v)
    return np.array(pts)


def mc_volume(W, C, samples, rng):
    """Hit-or-miss volume of W {|C theta| <= 1} inside the bounding box of its vertices."""
    V = brute_force_vertices(C) @ W.T
    lo, hi = V.min(axis=0), V.max(axis=0)
    pts = rng.uniform(lo, hi, size=(samples, len(lo)))
    theta = np.linalg.solve(W, pts.T).T
    inside = np.all(np.abs(theta @ np.atleast_2d(C).T) <= 1, axis=1)
    return inside.mean() * np.prod(hi - lo)


def alpha_lp(C, H_x):
    """Largest alpha with H_x (alpha theta) <= 1 on {|C theta| <= 1}, by linear programming."""
    from scipy.optimize import linprog

    C = np.atleast_2d(C)
    n = C.shape[1]
    worst = 0.0
    for h in np.atleast_2d(H_x):
        res = linprog(-h, A_ub=np.vstack([C, -C]), b_ub=np.ones(2 * C.shape[0]),
                      bounds=[(None, None)] * n)
        worst = max(worst, -res.fun)
    return 1.0 / worst


def box_corners(half):
    return np.array(list(product(*[(-h, h) for h in half])))
