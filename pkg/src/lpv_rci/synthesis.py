"""Iterative determinant maximization for the RCI set ``S = W Theta`` and gains ``K^l``.

Each iteration solves one SDP in which the non-convex term ``W' X^-1 W`` of
the coupling blocks is replaced by its tangent at the previous iterate
(``Zq = Xq^-1 Wq``) and ``log det W`` is replaced by ``log det W_obj`` with
``W'Wq + Wq'W - Wq'Wq >= W_obj``. The previous iterate stays feasible, so the
volume ``|det W| vol(Theta)`` cannot decrease beyond solver accuracy.

Iteration 0 starts from ``W0 = alpha I`` (largest multiple of the identity
satisfying the state constraints at every theta-vertex) and ``X0 = I``.

The band matrix ``C`` is divided by ``alpha`` before solving. This leaves the
synthesized set unchanged (``W`` and ``N`` scale back by ``alpha``) but keeps
the decision variables of order one, which the interior-point solver needs
for the larger ``n_c`` presets.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import polytope
from .datamatrices import DataMatrices, InformativityReport, informativity
from .lmi import EPS_MARGIN, LmiProgram, Triple, build_program, triples, variable_counts
from .solvers import (NEAR_OPTIMAL, NUMERICAL_FAILURE, OPTIMAL, CertificateReport, SolveResult,
                      SolverOptions, solve, verify_solution)
from .trajectory import ConstraintSets

logger = logging.getLogger(__name__)

ALPHA_CAP = 1e3
PD_TOL = 1e-9
SINGULAR_TOL = 1e-9
TIGHT_TOL = 1e-10


class SynthesisError(RuntimeError):
    pass


class InformativityError(SynthesisError):
    def __init__(self, report: InformativityReport):
        reasons = []
        if not report.full_row_rank:
            reasons.append(f"rank(Xpu)={report.rank_Xpu} < {report.required_rank}")
        if not report.H_w_full_column_rank:
            reasons.append(f"rank(H_w)={report.H_w_rank} < {report.n}")
        super().__init__(f"data not informative: {', '.join(reasons)}; "
                         "the admissible model set is unbounded")
        self.report = report


class SynthesisInfeasible(SynthesisError):
    def __init__(self, message: str, program: LmiProgram, result: SolveResult):
        super().__init__(message)
        self.program = program
        self.result = result


@dataclass
class SynthesisConfig:
    C: np.ndarray
    constraints: ConstraintSets
    max_iters: int = 5
    rel_vol_tol: float = 1e-3
    eps: float = EPS_MARGIN
    solver: SolverOptions = field(default_factory=SolverOptions.from_env)
    normalize: bool = True
    allow_uninformative: bool = False
    dip_tol: float = 1e-6
    retry_eps_factor: float = 100.0

    def __post_init__(self):
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.C.shape[1] != self.constraints.n:
            raise ValueError(f"C has {self.C.shape[1]} columns, state dimension is {self.constraints.n}")
        if np.linalg.matrix_rank(self.C) < self.C.shape[1]:
            raise polytope.UnboundedPolytopeError("C must have full column rank")


@dataclass
class IterationState:
    W_q: np.ndarray
    X_q: dict[Triple, np.ndarray]
    q: int
    volume_q: float

    def __post_init__(self):
        for t, X in self.X_q.items():
            sym = (X + X.T) / 2
            if np.linalg.eigvalsh(sym)[0] <= PD_TOL:
                raise SynthesisError(f"X{list(t)} is not positive definite")
            self.X_q[t] = sym

    def Z_q(self) -> dict[Triple, np.ndarray]:
        return {t: np.linalg.solve(X, self.W_q) for t, X in self.X_q.items()}


def state_scaling(C, H_x) -> float:
    """Largest ``alpha`` with ``H_x (alpha I) theta <= 1`` at every vertex of the C-band."""
    theta = polytope.symmetric_band_vertices(C).vertices
    H_x = np.atleast_2d(H_x)
    worst = float(np.max(theta @ H_x.T)) if H_x.size else 0.0
    if worst <= 0.0:
        logger.info("state constraints do not bound alpha; capped at %g", ALPHA_CAP)
        return ALPHA_CAP
    return 1.0 / worst


def init_iteration(cfg: SynthesisConfig, C=None) -> IterationState:
    """``W0 = alpha I`` and ``X0 = I`` for every triple (``Z0 = W0``)."""
    C = cfg.C if C is None else np.atleast_2d(np.asarray(C, dtype=float))
    n = C.shape[1]
    alpha = state_scaling(C, cfg.constraints.H_x)
    theta = polytope.symmetric_band_vertices(C)
    vol = alpha ** n * polytope.volume(theta)
    X0 = {t: np.eye(n) for t in triples(len(theta), cfg.constraints.v_p, C.shape[0])}
    return IterationState(alpha * np.eye(n), X0, 0, vol)


def extract_gains(W, N) -> list[np.ndarray]:
    """``K^l = N^l W^-1`` for each ``m x n`` block ``N^l`` of ``N``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    N = np.atleast_2d(np.asarray(N, dtype=float))
    n = W.shape[0]
    if abs(np.linalg.det(W)) <= SINGULAR_TOL:
        raise SynthesisError("W is singular; gains undefined")
    if N.shape[1] % n:
        raise ValueError(f"N has {N.shape[1]} columns, not a multiple of n={n}")
    Winv = np.linalg.inv(W)
    return [N[:, l * n:(l + 1) * n] @ Winv for l in range(N.shape[1] // n)]


def scheduled_gain(K_list, p) -> np.ndarray:
    return sum(pl * K for pl, K in zip(np.asarray(p, dtype=float), K_list))


@dataclass
class IterationRecord:
    q: int
    volume: float
    status: str
    objective: float | None
    solve_time: float
    certificate: dict
    eps: float
    retried: bool = False


@dataclass
class SynthesisResult:
    W: np.ndarray
    N: np.ndarray
    K_list: list[np.ndarray]
    C: np.ndarray
    theta_vertices: np.ndarray
    volume_history: list[float]
    iterations: list[IterationRecord]
    solve_results: list[SolveResult] = field(repr=False)
    informativity: InformativityReport | None
    status: str
    initial_volume: float
    counts: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    scale: float = 1.0
    programs: list[LmiProgram] = field(default_factory=list, repr=False)

    @property
    def volume(self) -> float:
        return self.volume_history[-1]

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def K(self, p) -> np.ndarray:
        return scheduled_gain(self.K_list, p)

    def set_vertices(self) -> np.ndarray:
        return self.theta_vertices @ self.W.T

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "W": self.W.tolist(),
            "N": self.N.tolist(),
            "K_list": [K.tolist() for K in self.K_list],
            "C": self.C.tolist(),
            "volume": self.volume,
            "volume_history": self.volume_history,
            "initial_volume": self.initial_volume,
            "iterations": [vars(r) for r in self.iterations],
            "informativity": None if self.informativity is None else self.informativity.to_dict(),
            "variable_counts": self.counts,
            "normalization_scale": self.scale,
            "warnings": self.warnings,
            "set_vertices": self.set_vertices().tolist(),
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisResult":
        C = np.array(d["C"], dtype=float)
        return cls(
            W=np.array(d["W"], dtype=float),
            N=np.array(d["N"], dtype=float),
            K_list=[np.array(K, dtype=float) for K in d["K_list"]],
            C=C,
            theta_vertices=polytope.symmetric_band_vertices(C).vertices,
            volume_history=list(d["volume_history"]),
            iterations=[IterationRecord(**r) for r in d.get("iterations", [])],
            solve_results=[],
            informativity=None,
            status=d.get("status", "loaded"),
            initial_volume=d.get("initial_volume", float("nan")),
            counts=d.get("variable_counts", {}),
            warnings=list(d.get("warnings", [])),
            scale=d.get("normalization_scale", 1.0),
        )

    @classmethod
    def load_json(cls, path) -> "SynthesisResult":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _solve_checked(prog: LmiProgram, opts: SolverOptions) -> tuple[SolveResult, CertificateReport | None]:
    res = solve(prog, opts)
    if not res.ok:
        return res, None
    cert = verify_solution(prog, res, opts.feas_tol)
    if res.status == OPTIMAL and not verify_solution(prog, res, 10 * opts.feas_tol).passed:
        logger.warning("solver reported optimal but certificate check failed; downgraded")
        res.status = NUMERICAL_FAILURE
    elif res.status == NEAR_OPTIMAL and not cert.passed:
        res.status = NUMERICAL_FAILURE
    return res, cert


def _unscale(res: SolveResult, gamma: float, vol_theta: float):
    W, N = gamma * res.values["W"], gamma * res.values["N"]
    return W, N, abs(np.linalg.det(W)) * vol_theta


def synthesize(dm: DataMatrices, cfg: SynthesisConfig) -> SynthesisResult:
    """Run the iterative synthesis and return the last accepted iterate.

    Raises :class:`InformativityError` for uninformative data (unless
    ``cfg.allow_uninformative``) and :class:`SynthesisInfeasible` when the first
    iteration has no feasible point. Solver failures in later iterations stop
    the loop and return the best iterate so far with a warning.
    """
    cs = cfg.constraints
    warnings_: list[str] = []
    report = informativity(dm, cs)
    if not report.bounded:
        if not cfg.allow_uninformative:
            raise InformativityError(report)
        msg = "proceeding with uninformative data; the admissible model set is unbounded"
        logger.warning(msg)
        warnings_.append(msg)

    gamma = state_scaling(cfg.C, cs.H_x) if cfg.normalize else 1.0
    Cn = cfg.C / gamma
    theta_n = polytope.symmetric_band_vertices(Cn)
    theta = polytope.symmetric_band_vertices(cfg.C).vertices
    vol_theta = polytope.volume(polytope.PolytopeV(theta))
    state = init_iteration(cfg, Cn)
    initial_volume = abs(np.linalg.det(gamma * state.W_q)) * vol_theta

    history: list[float] = []
    records: list[IterationRecord] = []
    results: list[SolveResult] = []
    programs: list[LmiProgram] = []
    best: tuple[np.ndarray, np.ndarray] | None = None
    counts: dict = {}
    status = "max-iters"

    for q in range(cfg.max_iters):
        eps = cfg.eps
        prog = build_program(dm, cs, Cn, theta_n.vertices, linearization=state.Z_q(),
                             W_q=state.W_q, eps=eps, name=f"iteration-{q}")
        counts = variable_counts(prog)
        res, cert = _solve_checked(prog, cfg.solver)
        retried = False
        if res.status == NUMERICAL_FAILURE or (res.status == NEAR_OPTIMAL and not cert.passed):
            eps = cfg.eps * cfg.retry_eps_factor
            logger.info("iteration %d: %s, retrying with eps=%g", q, res.status, eps)
            prog = build_program(dm, cs, Cn, theta_n.vertices, linearization=state.Z_q(),
                                 W_q=state.W_q, eps=eps, name=f"iteration-{q}-retry")
            res, cert = _solve_checked(prog, cfg.solver)
            retried = True
        results.append(res)
        programs.append(prog)
        if not res.ok:
            if q == 0:
                raise SynthesisInfeasible(
                    f"first iteration returned status {res.status!r}", prog, res)
            msg = f"iteration {q}: solver status {res.status!r}; returning best iterate"
            logger.warning(msg)
            warnings_.append(msg)
            status = "solver-failure"
            break

        W, N, vol = _unscale(res, gamma, vol_theta)
        if history and vol < history[-1] * (1 - cfg.dip_tol):
            # the previous iterate is feasible, so a dip means the solver stopped early
            logger.info("iteration %d: volume dip %.2e, re-solving with tight tolerances",
                        q, 1 - vol / history[-1])
            tight = replace(cfg.solver, gap_tol=TIGHT_TOL, max_iters=500,
                            extra={**cfg.solver.extra, "tol_feas": TIGHT_TOL})
            res2, cert2 = _solve_checked(prog, tight)
            if res2.ok:
                W2, N2, vol2 = _unscale(res2, gamma, vol_theta)
                if vol2 > vol:
                    res, cert, W, N, vol, retried = res2, cert2, W2, N2, vol2, True
                    results[-1] = res
        if abs(np.linalg.det(W)) <= SINGULAR_TOL:
            if q == 0:
                raise SynthesisInfeasible("first iteration returned a singular W", prog, res)
            msg = f"iteration {q}: W is singular; returning best iterate"
            warnings_.append(msg)
            status = "solver-failure"
            break
        if history and vol < history[-1] * (1 - cfg.dip_tol):
            msg = (f"iteration {q}: volume dropped from {history[-1]:.6g} to {vol:.6g} "
                   f"(relative {1 - vol / history[-1]:.2e}); aborting")
            logger.warning(msg)
            warnings_.append(msg)
            status = "volume-dip"
            break
        if history and vol < history[-1]:
            logger.info("iteration %d: volume dip %.2e within tolerance",
                        q, 1 - vol / history[-1])
        records.append(IterationRecord(q, vol, res.status, res.objective, res.solve_time,
                                       cert.summary() if cert else {}, eps, retried))
        history.append(vol)
        best = (W, N)
        logger.info("iteration %d: volume %.6g (%s, %.2fs)", q, vol, res.status, res.solve_time)

        Wn = res.values["W"]
        X_next = {tuple(t): res.values[f"X[{t[0]},{t[1]},{t[2]}]"]
                  for t in prog.meta["triples"]}
        try:
            state = IterationState(Wn, X_next, q + 1, vol)
        except SynthesisError as exc:
            msg = f"iteration {q}: {exc}; stopping"
            warnings_.append(msg)
            status = "solver-failure"
            break
        if len(history) >= 2 and (history[-1] - history[-2]) < cfg.rel_vol_tol * history[-2]:
            status = "converged"
            break

    W, N = best
    return SynthesisResult(
        W=W, N=N, K_list=extract_gains(W, N), C=cfg.C.copy(), theta_vertices=theta,
        volume_history=history, iterations=records, solve_results=results,
        informativity=report, status=status, initial_volume=initial_volume,
        counts=counts, warnings=warnings_, scale=gamma, programs=programs,
    )


def theta_volume(C) -> float:
    return polytope.volume(polytope.symmetric_band_vertices(C))


def log_volume(W, C) -> float:
    return math.log(abs(np.linalg.det(W))) + math.log(theta_volume(C))
