"""Symbolic LMI programs for data-driven RCI set synthesis.

A program is a list of decision variables (each a slice of one flat parameter
vector), elementwise linear constraints ``expr >= 0``, PSD constraints
``expr >= 0`` (in the semidefinite sense) and an optional objective. All
constraint expressions are :class:`~lpv_rci.affine.AffineExpr` objects, so the
program can be evaluated, dumped or exported without a solver.

Invariance is imposed per triple ``(i, j, k)`` of a theta-vertex, a scheduling
vertex and a row of ``C``. Each triple contributes two PSD blocks:

* the invariance block of side ``1 + (ns+m)n + 3n``, linear in
  ``(W, N, X, V, phi, Lambda, Gamma)``::

      [ r        -d'Lam Z     0          0       0 ]
      [ .        Z'Lam Z      0          G'      0 ]
      [ .        .            Hw'Gam Hw  I       0 ]
      [ .        .            .          V + V'  V']
      [ .        .            .          .       X ]

  with ``r = phi - 1'Lam 1 - 1'Gam 1 + d'Lam d`` and
  ``G = ([I_s kron W; N] (p kron theta))' kron I_n``;
* the coupling block of side ``n + 1``::

      [ W'Zq + Zq'W - Zq'X Zq    phi C'e_k ]
      [ phi e_k'C                phi       ]

  where ``Zq = I`` gives the non-iterative form.

The S-procedure slack signals and the quadratic-form vector used to derive
these blocks are analysis devices only; they are never decision variables.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .affine import AffineExpr, as_expr, diag_congruence, kron, sym_bmat, vstack
from .datamatrices import DataMatrices
from .trajectory import ConstraintSets

logger = logging.getLogger(__name__)

EPS_MARGIN = 1e-8

Triple = tuple[int, int, int]


# ---------------------------------------------------------------------------
# program container


@dataclass
class Variable:
    name: str
    shape: tuple[int, int]
    kind: str
    offset: int
    nparams: int
    nonneg: bool
    expr: AffineExpr = field(repr=False)
    scale: np.ndarray | None = field(default=None, repr=False)

    def value(self, x: np.ndarray):
        """Numeric value; diagonal variables return their diagonal, scalars a float."""
        val = self.expr.value(x)
        if self.kind == "scalar":
            return float(val[0, 0])
        if self.kind == "diagonal":
            return val[:, 0]
        return val

    def params_from_value(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        r, c = self.shape
        if self.kind == "scalar":
            p = np.atleast_1d(value).astype(float)
        elif self.kind == "diagonal":
            p = value.reshape(-1) if value.ndim == 1 else np.diag(value)
        elif self.kind == "symmetric":
            iu = np.triu_indices(r)
            p = value[iu]
        elif self.kind == "lower":
            il = np.tril_indices(r)
            p = value[il]
        else:
            p = value.reshape(-1)
        return p / self.scale if self.scale is not None else p


@dataclass
class Constraint:
    name: str
    expr: AffineExpr = field(repr=False)
    kind: str = ""


class LmiProgram:
    """Container for decision variables, constraints and objective."""

    def __init__(self, name: str = "lmi"):
        self.name = name
        self.variables: dict[str, Variable] = {}
        self.nvars = 0
        self.linear: list[Constraint] = []
        self.psd: list[Constraint] = []
        self.objective: tuple[str, AffineExpr] | None = None
        self.meta: dict = {}

    # variables ----------------------------------------------------------------
    def add_variable(self, name: str, shape, kind: str = "full", nonneg: bool = False,
                     scale=None) -> Variable:
        """Declare a variable.

        ``kind`` is one of ``full``, ``symmetric``, ``lower`` (lower triangular),
        ``diagonal`` (exposed as a k x 1 vector of its diagonal) or ``scalar``.
        ``scale`` multiplies the underlying parameters entrywise; it changes the
        conditioning seen by a solver, not the feasible set.
        """
        if name in self.variables:
            raise ValueError(f"duplicate variable {name!r}")
        if kind == "scalar":
            shape = (1, 1)
        shape = (int(shape[0]), int(shape[1]))
        r, c = shape
        if kind in ("symmetric", "lower", "diagonal") and r != c:
            raise ValueError(f"{kind} variable must be square")
        if kind == "full" or kind == "scalar":
            rows = np.arange(r * c)
            npar = r * c
            cols = np.arange(npar)
            eshape = shape
        elif kind == "symmetric":
            iu, ju = np.triu_indices(r)
            npar = len(iu)
            rows = np.concatenate([iu * c + ju, ju * c + iu])
            cols = np.concatenate([np.arange(npar), np.arange(npar)])
            keep = np.ones(len(rows), dtype=bool)
            keep[npar:] = iu != ju
            rows, cols = rows[keep], cols[keep]
            eshape = shape
        elif kind == "lower":
            il, jl = np.tril_indices(r)
            npar = len(il)
            rows = il * c + jl
            cols = np.arange(npar)
            eshape = shape
        elif kind == "diagonal":
            npar = r
            rows = np.arange(r)
            cols = np.arange(r)
            eshape = (r, 1)
        else:
            raise ValueError(f"unknown variable kind {kind!r}")
        vals = np.ones(len(rows))
        if scale is not None:
            scale = np.broadcast_to(np.asarray(scale, dtype=float), (npar,)).copy()
            vals = scale[cols]
        off = self.nvars
        self.nvars += npar
        coef = sp.csr_matrix((vals, (rows, cols + off)), shape=(eshape[0] * eshape[1], self.nvars))
        expr = AffineExpr(eshape, coef, np.zeros(eshape[0] * eshape[1]))
        var = Variable(name, shape, kind, off, npar, nonneg, expr, scale)
        self.variables[name] = var
        if nonneg:
            self.add_linear(f"nonneg:{name}", expr, kind="bound")
        return var

    def __getitem__(self, name: str) -> Variable:
        return self.variables[name]

    # constraints --------------------------------------------------------------
    def add_linear(self, name: str, expr: AffineExpr, kind: str = "") -> None:
        """Elementwise ``expr >= 0``."""
        self.linear.append(Constraint(name, as_expr(expr), kind))

    def add_psd(self, name: str, expr: AffineExpr, kind: str = "") -> None:
        expr = as_expr(expr)
        if expr.shape[0] != expr.shape[1]:
            raise ValueError(f"PSD constraint {name!r} is not square")
        self.psd.append(Constraint(name, expr, kind))

    def maximize_logdet(self, expr: AffineExpr) -> None:
        self.objective = ("logdet", as_expr(expr))

    def maximize(self, expr: AffineExpr) -> None:
        expr = as_expr(expr)
        if expr.shape != (1, 1):
            raise ValueError("linear objective must be scalar")
        self.objective = ("max", expr)

    # evaluation ---------------------------------------------------------------
    def assignments(self, x: np.ndarray) -> dict:
        return {name: v.value(x) for name, v in self.variables.items()}

    def pack(self, values: Mapping[str, object]) -> np.ndarray:
        """Parameter vector from variable values (missing variables are zero)."""
        x = np.zeros(self.nvars)
        for name, val in values.items():
            v = self.variables[name]
            x[v.offset:v.offset + v.nparams] = v.params_from_value(val)
        return x

    def objective_value(self, x: np.ndarray) -> float | None:
        if self.objective is None:
            return None
        kind, expr = self.objective
        val = expr.value(x)
        if kind == "logdet":
            sign, logdet = np.linalg.slogdet((val + val.T) / 2)
            return float(logdet) if sign > 0 else -np.inf
        return float(val[0, 0])

    def count(self, kind: str) -> int:
        return sum(c.kind == kind for c in self.psd) + sum(c.kind == kind for c in self.linear)

    def scalar_inequalities(self, kind: str) -> int:
        return sum(c.expr.size for c in self.linear if c.kind == kind)

    # serialization --------------------------------------------------------------
    def to_dict(self) -> dict:
        def entries(expr: AffineExpr, upper_only: bool) -> list:
            r, c = expr.shape
            out = []
            coo = expr.coef.tocoo()
            for flat, par, val in zip(coo.row, coo.col, coo.data):
                i, j = divmod(int(flat), c)
                if upper_only and j < i:
                    continue
                out.append([i, j, int(par), float(val)])
            for flat in np.nonzero(expr.const)[0]:
                i, j = divmod(int(flat), c)
                if upper_only and j < i:
                    continue
                out.append([i, j, -1, float(expr.const[flat])])
            return out

        return {
            "name": self.name,
            "nparams": self.nvars,
            "variables": [
                {"name": v.name, "shape": list(v.shape), "kind": v.kind,
                 "offset": v.offset, "nparams": v.nparams, "nonneg": v.nonneg}
                for v in self.variables.values()
            ],
            "linear": [{"name": c.name, "kind": c.kind, "shape": list(c.expr.shape),
                        "entries": entries(c.expr, False)} for c in self.linear],
            "psd": [{"name": c.name, "kind": c.kind, "size": c.expr.shape[0],
                     "entries": entries(c.expr, True)} for c in self.psd],
            "objective": None if self.objective is None else {
                "sense": "maximize", "type": self.objective[0],
                "shape": list(self.objective[1].shape),
                "entries": entries(self.objective[1], False)},
            "meta": self.meta,
        }

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def copy(self) -> "LmiProgram":
        new = LmiProgram(self.name)
        new.variables = dict(self.variables)
        new.nvars = self.nvars
        new.linear = list(self.linear)
        new.psd = list(self.psd)
        new.objective = self.objective
        new.meta = dict(self.meta)
        return new


# ---------------------------------------------------------------------------
# constraint blocks


def _e(k: int, size: int) -> np.ndarray:
    if not 0 <= k < size:
        raise IndexError(f"row index {k} outside [0, {size})")
    e = np.zeros(size)
    e[k] = 1.0
    return e


def state_constraints(W, H_x, theta_vertices) -> list[AffineExpr]:
    """``1 - H_x W theta^i >= 0`` for every theta-vertex."""
    W = as_expr(W)
    H_x = np.atleast_2d(H_x)
    return [np.ones((H_x.shape[0], 1)) - H_x @ (W @ np.asarray(th, dtype=float))
            for th in np.atleast_2d(theta_vertices)]


def input_constraints(N, H_u, theta_vertices, p_vertices) -> list[AffineExpr]:
    """``1 - H_u N (p^j kron theta^i) >= 0`` for every vertex pair."""
    N = as_expr(N)
    H_u = np.atleast_2d(H_u)
    out = []
    for th in np.atleast_2d(theta_vertices):
        for p in np.atleast_2d(p_vertices):
            out.append(np.ones((H_u.shape[0], 1)) - H_u @ (N @ np.kron(p, th)))
    return out


def gamma_row(W, N, p, theta) -> AffineExpr:
    """``([I_s kron W; N] (p kron theta))' kron I_n`` (n x (ns+m)n), affine in (W, N)."""
    W, N = as_expr(W), as_expr(N)
    p = np.asarray(p, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    n = W.shape[0]
    Wbar = kron(np.eye(len(p)), W)
    y = vstack([Wbar, N]) @ np.kron(p, theta)
    return kron(y.T, np.eye(n))


def invariance_block(dm: DataMatrices, H_w, W, N, p, theta, X, V, phi, lam, gam,
                     center=None) -> AffineExpr:
    """Invariance PSD block for one triple.

    ``lam`` (T*n_w x 1) and ``gam`` (n_w x 1) are the diagonals of the
    S-procedure multipliers; ``phi`` is 1 x 1.

    ``center`` (a model matrix ``M_c`` or its vectorization) expresses the
    block in the shifted coordinates ``vec M = vec M_c + delta``. This is the
    congruence ``T' B T`` with ``T = [[1, 0], [vec M_c, I]]`` (identity on the
    remaining blocks), so feasibility is unchanged; ``d`` is replaced by the
    residual ``e = d - Z vec M_c`` and block (1,4) becomes ``(M_c y)'``. With
    data far from the origin it avoids the cancellation between ``d'Lam d``
    and ``Z'Lam Z`` that otherwise limits the attainable accuracy.
    """
    H_w = np.atleast_2d(H_w)
    n = dm.n
    X, V, phi, lam, gam = (as_expr(a) for a in (X, V, phi, lam, gam))
    if lam.shape != (dm.Z.shape[0], 1):
        raise ValueError("lam must be a (T*n_w) x 1 vector")
    nz = dm.Z.shape[1]
    G = gamma_row(W, N, p, theta)
    e = dm.d
    cross = np.zeros((1, n))
    if center is not None:
        mc = np.asarray(center, dtype=float)
        mc = mc.reshape(-1, order="F") if mc.ndim == 2 else mc
        if mc.shape != (nz,):
            raise ValueError(f"center must have {nz} entries")
        e = dm.d - dm.Z @ mc
        cross = (G @ mc[:, None]).T
    ones_T = np.ones((1, dm.Z.shape[0]))
    ones_w = np.ones((1, H_w.shape[0]))
    r = phi - ones_T @ lam - ones_w @ gam + (e ** 2)[None, :] @ lam
    top = lam.T @ (-(e[:, None] * dm.Z)) if dm.Z.shape[0] else np.zeros((1, nz))
    ZLZ = diag_congruence(dm.Z, lam) if dm.Z.shape[0] else np.zeros((nz, nz))
    return sym_bmat([
        [r, top, np.zeros((1, n)), cross, np.zeros((1, n))],
        [None, ZLZ, np.zeros((nz, n)), G.T, np.zeros((nz, n))],
        [None, None, diag_congruence(H_w, gam), np.eye(n), np.zeros((n, n))],
        [None, None, None, V + V.T, V.T],
        [None, None, None, None, X],
    ])


def nominal_model(dm: DataMatrices) -> np.ndarray:
    """Least-squares model ``X+ pinv(Xpu)``; a natural center of the admissible set."""
    if dm.T == 0:
        return np.zeros(dm.model_shape)
    return dm.Xplus @ np.linalg.pinv(dm.Xpu)


def _coupling(lead: AffineExpr, phi, C, k: int) -> AffineExpr:
    C = np.atleast_2d(np.asarray(C, dtype=float))
    c = C.T @ _e(k, C.shape[0])
    phi = as_expr(phi)
    return sym_bmat([[lead, phi.scalar_times(c[:, None])], [None, phi]])


def w_coupling_block_theorem(W, X, phi, C, k: int) -> AffineExpr:
    """``[[W' + W - X, phi C'e_k], [phi e_k'C, phi]]``."""
    W, X = as_expr(W), as_expr(X)
    return _coupling(W.T + W - X, phi, C, k)


def w_coupling_block_iter(W, X, phi, C, k: int, Zq) -> AffineExpr:
    """Coupling block with ``W' X^-1 W`` bounded below by its tangent at ``Zq``."""
    W, X = as_expr(W), as_expr(X)
    Zq = np.asarray(Zq, dtype=float)
    return _coupling(W.T @ Zq + Zq.T @ W - Zq.T @ X @ Zq, phi, C, k)


def volume_step_constraint(W, W_obj, W_q, eps: float = EPS_MARGIN) -> tuple[AffineExpr, AffineExpr]:
    """``W'W_q + W_q'W - W_q'W_q - W_obj >= 0`` and ``W_obj - eps I >= 0``."""
    W_q = np.asarray(W_q, dtype=float)
    n = W_q.shape[0]
    if abs(np.linalg.det(W_q)) <= 1e-12 * max(1.0, np.abs(W_q).max()) ** n:
        raise ValueError("linearization point W_q is singular")
    W, W_obj = as_expr(W), as_expr(W_obj)
    step = W.T @ W_q + W_q.T @ W - W_q.T @ W_q - W_obj
    return step, W_obj - eps * np.eye(n)


# ---------------------------------------------------------------------------
# full programs


def triples(n_theta: int, n_p: int, n_c: int) -> list[Triple]:
    return [(i, j, k) for i in range(n_theta) for j in range(n_p) for k in range(n_c)]


def _tag(t: Triple) -> str:
    return f"[{t[0]},{t[1]},{t[2]}]"


def multiplier_scale(F: np.ndarray) -> np.ndarray:
    """Per-row scaling ``1/||f_r||^2`` for a diagonal multiplier in ``F' diag(l) F``."""
    norms = np.sum(np.atleast_2d(F) ** 2, axis=1)
    return np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)


def build_program(dm: DataMatrices, constraints: ConstraintSets, C, theta_vertices,
                  linearization: Mapping[Triple, np.ndarray] | None = None,
                  W_q: np.ndarray | None = None, eps: float = EPS_MARGIN,
                  scale_multipliers: bool = True, x_margin: bool = False,
                  centered: bool = True, name: str | None = None) -> LmiProgram:
    """Assemble the synthesis program.

    Without ``linearization`` the coupling blocks take the non-iterative form
    and the program is a pure feasibility problem. With ``linearization`` (one
    matrix per triple) and ``W_q``, the coupling blocks are linearized at the
    given points and the objective ``max log det W_obj`` with its volume-step
    constraint is added.

    ``centered`` writes the invariance blocks around the least-squares model
    (an exact congruence, see :func:`invariance_block`); ``scale_multipliers``
    rescales each entry of ``Lambda`` and ``Gamma`` by the inverse squared norm
    of its data row. Neither option changes the feasible set of ``(W, N)``.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    theta_vertices = np.atleast_2d(np.asarray(theta_vertices, dtype=float))
    P = constraints.scheduling_vertices
    n, m, s = dm.n, dm.m, dm.s
    if C.shape[1] != n or constraints.n != n:
        raise ValueError("dimension mismatch between C, constraints and data")
    n_w = constraints.n_w
    iterative = linearization is not None
    prog = LmiProgram(name or ("iteration" if iterative else "theorem"))
    W = prog.add_variable("W", (n, n)).expr
    N = prog.add_variable("N", (m, n * s)).expr

    for i, g in enumerate(state_constraints(W, constraints.H_x, theta_vertices)):
        prog.add_linear(f"state[{i}]", g, kind="state")
    pairs = [(i, j) for i in range(len(theta_vertices)) for j in range(len(P))]
    for (i, j), g in zip(pairs, input_constraints(N, constraints.H_u, theta_vertices, P)):
        prog.add_linear(f"input[{i},{j}]", g, kind="input")

    lam_scale = multiplier_scale(dm.Z) if scale_multipliers else None
    gam_scale = multiplier_scale(constraints.H_w) if scale_multipliers else None
    center = nominal_model(dm) if centered else None
    all_triples = triples(len(theta_vertices), len(P), C.shape[0])
    for t in all_triples:
        i, j, k = t
        tag = _tag(t)
        X = prog.add_variable(f"X{tag}", (n, n), "symmetric").expr
        V = prog.add_variable(f"V{tag}", (n, n)).expr
        phi = prog.add_variable(f"phi{tag}", (1, 1), "scalar", nonneg=True).expr
        lam = prog.add_variable(f"Lambda{tag}", (dm.Z.shape[0],) * 2, "diagonal",
                                nonneg=True, scale=lam_scale).expr
        gam = prog.add_variable(f"Gamma{tag}", (n_w, n_w), "diagonal",
                                nonneg=True, scale=gam_scale).expr
        if iterative:
            coupling = w_coupling_block_iter(W, X, phi, C, k, linearization[t])
        else:
            coupling = w_coupling_block_theorem(W, X, phi, C, k)
        prog.add_psd(f"coupling{tag}", coupling, kind="coupling")
        prog.add_psd(f"invariance{tag}",
                     invariance_block(dm, constraints.H_w, W, N, P[j], theta_vertices[i],
                                      X, V, phi, lam, gam, center), kind="invariance")
        if x_margin:
            prog.add_psd(f"margin:X{tag}", X - eps * np.eye(n), kind="margin")

    if iterative:
        if W_q is None:
            raise ValueError("W_q is required with a linearization")
        W_obj = prog.add_variable("W_obj", (n, n), "symmetric").expr
        step, pos = volume_step_constraint(W, W_obj, W_q, eps)
        prog.add_psd("volume_step", step, kind="volume")
        prog.add_psd("margin:W_obj", pos, kind="margin")
        prog.maximize_logdet(W_obj)

    prog.meta.update(
        triples=[list(t) for t in all_triples], n=n, m=m, s=s, T=dm.T, n_w=n_w,
        n_c=C.shape[0], n_theta=len(theta_vertices), v_p=len(P), centered=centered,
    )
    return prog


def variable_counts(prog: LmiProgram) -> dict:
    """Exact scalar parameter count next to the closed-form figure quoted for the method.

    The closed form ``3n^2 + mns + (T+1)n_w + 1`` counts one instance of each
    per-triple variable; the exact count sums over all triples.
    """
    meta = prog.meta
    n, m, s, T, n_w = (meta[k] for k in ("n", "m", "s", "T", "n_w"))
    return {
        "exact": prog.nvars,
        "per_triple": n * (n + 1) // 2 + n * n + 1 + T * n_w + n_w,
        "triples": len(meta["triples"]),
        "closed_form": 3 * n * n + m * n * s + (T + 1) * n_w + 1,
    }


def logdet_to_geomean(prog: LmiProgram) -> LmiProgram:
    """Replace ``max log det(E)`` by ``max t`` with ``t <= det(E)^(1/n)``.

    Uses ``[[E, L], [L', diag(L)]] >= 0`` with lower-triangular ``L`` and a
    binary tree of 2x2 blocks ``[[a, y], [y, b]] >= 0`` (``y <= sqrt(ab)``) for
    the geometric mean of ``diag(L)``; leaves beyond ``n`` are padded with
    ``t``. Only linear objectives and PSD blocks remain, which any SDP solver
    accepts.
    """
    if prog.objective is None or prog.objective[0] != "logdet":
        raise ValueError("program has no log-det objective")
    out = prog.copy()
    E = prog.objective[1]
    n = E.shape[0]
    L = out.add_variable("geomean:L", (n, n), "lower").expr
    eye = np.eye(n)
    diagL = vstack([eye[i][None, :] @ L @ eye[i][:, None] for i in range(n)])
    out.add_psd("geomean:factor",
                sym_bmat([[E, L], [None, diag_congruence(eye, diagL)]]), kind="geomean")
    t = out.add_variable("geomean:t", (1, 1), "scalar").expr
    leaves: list[AffineExpr] = [eye[i][None, :] @ diagL for i in range(n)]
    size = 1
    while size < n:
        size *= 2
    leaves += [t] * (size - n)
    level = 0
    while len(leaves) > 1:
        nxt = []
        for a in range(0, len(leaves), 2):
            top = len(leaves) == 2
            y = t if top else out.add_variable(f"geomean:y{level}_{a // 2}", (1, 1), "scalar").expr
            out.add_psd(f"geomean:pair{level}_{a // 2}",
                        sym_bmat([[leaves[a], y], [None, leaves[a + 1]]]), kind="geomean")
            nxt.append(y)
        leaves = nxt
        level += 1
    if n == 1:
        out.add_linear("geomean:single", leaves[0] - t, kind="geomean")
    out.maximize(t)
    out.meta["geomean_of"] = prog.name
    out.meta["logdet_dim"] = n
    return out


def block_sizes(prog: LmiProgram, kind: str) -> list[int]:
    return [c.expr.shape[0] for c in prog.psd if c.kind == kind]


def psd_names(prog: LmiProgram, kinds: Iterable[str]) -> list[str]:
    kinds = set(kinds)
    return [c.name for c in prog.psd if c.kind in kinds]
