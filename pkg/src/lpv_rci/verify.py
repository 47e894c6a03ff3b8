"""Falsification checks for a synthesized pair (S, K).

All checks recompute their figures from raw simulations or vertex data; none
of them read solver residuals. The LMI certificate is the proof of
invariance over the admissible model set; these checks can only find
counterexamples.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import polytope
from .datamatrices import DataMatrices, build, informativity, membership, unvec
from .synthesis import SynthesisConfig, SynthesisError, SynthesisResult, scheduled_gain, synthesize
from .trajectory import (ConstraintSets, LpvPlant, Trajectory, sample_disturbances,
                         sample_scheduling)

logger = logging.getLogger(__name__)

CONTAINMENT_TOL = 1e-7
INVARIANCE_TOL = 1e-6
DECOMPOSITION_TOL = 1e-9
TREND_SLACK = 0.05


class UnboundedModelSetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# constraint containment


@dataclass
class ContainmentReport:
    state_max: float
    input_max: float
    state_argmax: tuple | None
    input_argmax: tuple | None
    tol: float = CONTAINMENT_TOL

    @property
    def state_ok(self) -> bool:
        return self.state_max <= 1 + self.tol

    @property
    def input_ok(self) -> bool:
        return self.input_max <= 1 + self.tol

    @property
    def passed(self) -> bool:
        return self.state_ok and self.input_ok

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def check_containment(W, N, constraints: ConstraintSets, theta_vertices,
                      tol: float = CONTAINMENT_TOL) -> ContainmentReport:
    """Worst values of ``H_x W theta^i`` and ``H_u N (p^j kron theta^i)`` over all vertices.

    ``argmax`` fields locate the worst case as ``(vertex, row)`` or
    ``(theta-vertex, p-vertex, row)``. Empty constraint matrices pass vacuously.
    """
    W = np.atleast_2d(W)
    N = np.atleast_2d(N)
    theta = np.atleast_2d(theta_vertices)
    H_x, H_u = constraints.H_x, constraints.H_u
    s_max, s_arg = -np.inf, None
    if H_x.size:
        vals = (H_x @ W @ theta.T).T  # vertex x row
        i, r = np.unravel_index(np.argmax(vals), vals.shape)
        s_max, s_arg = float(vals[i, r]), (int(i), int(r))
    u_max, u_arg = -np.inf, None
    if H_u.size:
        for i, th in enumerate(theta):
            for j, p in enumerate(constraints.scheduling_vertices):
                vals = H_u @ N @ np.kron(p, th)
                r = int(np.argmax(vals))
                if vals[r] > u_max:
                    u_max, u_arg = float(vals[r]), (i, j, r)
    return ContainmentReport(s_max, u_max, s_arg, u_arg, tol)


def containment(result: SynthesisResult, constraints: ConstraintSets,
                tol: float = CONTAINMENT_TOL) -> ContainmentReport:
    return check_containment(result.W, result.N, constraints, result.theta_vertices, tol)


# ---------------------------------------------------------------------------
# deterministic vertex check


@dataclass
class VertexReport:
    max_norm: float
    evaluations: int
    violations: list[tuple] = field(default_factory=list)
    tol: float = INVARIANCE_TOL

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"max_norm": self.max_norm, "evaluations": self.evaluations,
                "violations": [list(v) for v in self.violations], "tol": self.tol,
                "passed": self.passed}


def vertex_invariance(result: SynthesisResult, M, constraints: ConstraintSets,
                      tol: float = INVARIANCE_TOL) -> VertexReport:
    """Successors of every ``(theta^i, p^j, w-vertex)`` under model ``M`` must stay in Theta.

    The successor is affine in ``w`` and bilinear in ``(p, theta)``, so the
    vertex evaluations cover every state of ``S``, every ``p`` in ``P`` and
    every ``w`` in ``W``.
    """
    M = np.atleast_2d(M)
    W, N, C = result.W, result.N, result.C
    Winv = np.linalg.inv(W)
    wv = constraints.disturbance_vertices()
    worst = -np.inf
    bad = []
    count = 0
    for i, th in enumerate(result.theta_vertices):
        x = W @ th
        for j, p in enumerate(constraints.scheduling_vertices):
            u = N @ np.kron(p, th)
            nominal = M @ np.concatenate([np.kron(p, x), u])
            for k, w in enumerate(wv):
                val = float(np.abs(C @ (Winv @ (nominal + w))).max())
                count += 1
                worst = max(worst, val)
                if val > 1 + tol:
                    bad.append((i, j, k, val))
    return VertexReport(worst, count, bad, tol)


# ---------------------------------------------------------------------------
# model sampling


def chebyshev_center(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Center and radius of the largest ball inside ``{m : A m <= b}``."""
    norms = np.linalg.norm(A, axis=1)
    nv = A.shape[1]
    c = np.zeros(nv + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([A, norms[:, None]]), b_ub=b,
                  bounds=[(None, None)] * nv + [(0, None)], method="highs")
    if res.status == 3:
        raise UnboundedModelSetError("admissible model set is unbounded")
    if res.status != 0:
        raise ValueError(f"Chebyshev center LP failed: {res.message}")
    return res.x[:nv], float(res.x[-1])


def model_set_inequalities(dm: DataMatrices) -> tuple[np.ndarray, np.ndarray]:
    """``A vec(M) <= b`` form of ``-1 + d <= Z vec(M) <= 1 + d``."""
    return np.vstack([dm.Z, -dm.Z]), np.concatenate([1 + dm.d, 1 - dm.d])


def sample_models(dm: DataMatrices, count: int, rng: np.random.Generator,
                  burn_in: int = 1000, thin: int = 10) -> list[np.ndarray]:
    """Hit-and-run samples of the admissible model set, started at its Chebyshev center.

    Every returned model passes :func:`datamatrices.membership`.
    """
    A, b = model_set_inequalities(dm)
    if dm.T == 0 or np.linalg.matrix_rank(dm.Z) < dm.Z.shape[1]:
        raise UnboundedModelSetError("admissible model set is unbounded; cannot sample")
    m, _ = chebyshev_center(A, b)
    out = []
    steps = burn_in + count * thin
    for k in range(steps):
        d = rng.standard_normal(len(m))
        d /= np.linalg.norm(d)
        Ad = A @ d
        slack = b - A @ m
        with np.errstate(divide="ignore"):
            t = slack / Ad
        hi = np.min(t[Ad > 0], initial=np.inf)
        lo = np.max(t[Ad < 0], initial=-np.inf)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise UnboundedModelSetError("admissible model set is unbounded along a sampled direction")
        m = m + rng.uniform(lo, hi) * d
        if k >= burn_in and (k - burn_in) % thin == thin - 1:
            M = unvec(m, dm.n)
            if not membership(dm, M):
                raise AssertionError("sampled model left the admissible set")
            out.append(M)
    return out


# ---------------------------------------------------------------------------
# Monte Carlo closed loop


@dataclass
class MonteCarloReport:
    trials: int
    horizon: int
    seed: int
    mode: str
    max_norm: float
    per_trial_max: list[float] = field(repr=False)
    violating_trials: int
    tol: float = INVARIANCE_TOL
    trajectories: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.violating_trials == 0

    @property
    def pass_rate(self) -> float:
        return 1.0 - self.violating_trials / self.trials if self.trials else 1.0

    def to_dict(self) -> dict:
        return {"trials": self.trials, "horizon": self.horizon, "seed": self.seed,
                "mode": self.mode, "max_norm": self.max_norm,
                "violating_trials": self.violating_trials, "pass_rate": self.pass_rate,
                "tol": self.tol, "passed": self.passed,
                "per_trial_max": self.per_trial_max}


def _boundary_point(theta_vertices: np.ndarray, C: np.ndarray, rng) -> np.ndarray:
    lam = rng.dirichlet(np.ones(len(theta_vertices)))
    th = lam @ theta_vertices
    nrm = np.abs(C @ th).max()
    return th / nrm if nrm > 0 else theta_vertices[0]


def monte_carlo_invariance(result: SynthesisResult, constraints: ConstraintSets,
                           plant: LpvPlant | None = None, dm: DataMatrices | None = None,
                           trials: int = 500, horizon: int = 50, seed: int = 0,
                           init: str = "vertices", K_list=None, disturbances: bool = True,
                           record: bool = False, tol: float = INVARIANCE_TOL) -> MonteCarloReport:
    """Closed-loop simulations under ``u = K(p) x`` from the boundary of ``S``.

    With ``plant`` the true model is used; otherwise ``dm`` must be given and
    each trial draws one model from the admissible set (hit-and-run).
    ``init`` is ``"vertices"`` (cycle through the vertices of S) or
    ``"boundary"`` (random boundary points). ``K_list`` overrides the
    synthesized gains, e.g. zero gains as a negative control. Each trial uses
    its own generator spawned from ``seed``.
    """
    if plant is None and dm is None:
        raise ValueError("need a plant (true-model mode) or data matrices (sampled-model mode)")
    mode = "true-model" if plant is not None else "sampled-model"
    W, C = result.W, result.C
    Winv = np.linalg.inv(W)
    K_list = result.K_list if K_list is None else [np.atleast_2d(K) for K in K_list]
    theta_v = result.theta_vertices
    children = np.random.SeedSequence(seed).spawn(trials + 1)
    models = None
    if plant is None:
        models = sample_models(dm, trials, np.random.default_rng(children[-1]))
    per_trial = []
    trajs = [] if record else None
    for t in range(trials):
        rng = np.random.default_rng(children[t])
        if init == "vertices":
            th0 = theta_v[t % len(theta_v)]
        elif init == "boundary":
            th0 = _boundary_point(theta_v, C, rng)
        else:
            raise ValueError(f"unknown init {init!r}")
        M = plant.M if plant is not None else models[t]
        ps = sample_scheduling(constraints.scheduling_vertices, horizon, rng)
        ws = (sample_disturbances(constraints.H_w, horizon, rng) if disturbances
              else np.zeros((horizon, W.shape[0])))
        x = W @ th0
        worst = float(np.abs(C @ th0).max())
        path = [x] if record else None
        for k in range(horizon):
            p = ps[k]
            u = scheduled_gain(K_list, p) @ x
            x = M @ np.concatenate([np.kron(p, x), u]) + ws[k]
            val = float(np.abs(C @ (Winv @ x)).max())
            worst = max(worst, val)
            if not np.isfinite(val):
                break
            if record:
                path.append(x)
        per_trial.append(worst)
        if record:
            trajs.append(np.array(path))
    viol = sum(v > 1 + tol for v in per_trial)
    return MonteCarloReport(trials, horizon, seed, mode, float(max(per_trial, default=0.0)),
                            per_trial, int(viol), tol, trajs)


# ---------------------------------------------------------------------------
# vertex decomposition of the one-step successor


@dataclass
class DecompositionReport:
    samples: int
    max_error: float
    tol: float = DECOMPOSITION_TOL
    mismatched_w: bool = False

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def successor_theta(M, W, N, p, theta, w) -> np.ndarray:
    """``W^-1 (M [p kron W theta; N (p kron theta)] + w)``."""
    x = W @ theta
    u = N @ np.kron(p, theta)
    return np.linalg.solve(W, M @ np.concatenate([np.kron(p, x), u]) + w)


def vertex_decomposition(W, N, M, theta_vertices, p_vertices, H_w, samples: int = 100,
                       seed: int = 0, tol: float = DECOMPOSITION_TOL, mismatch_w: bool = False,
                       disturbances: bool = True) -> DecompositionReport:
    """Interior successor versus the convex combination of vertex successors.

    For ``theta = sum a_i theta^i`` and ``p = sum b_j p^j`` the successor
    equals ``sum a_i b_j theta^{ij+}`` when both sides use the same ``w``
    (weights ``a_i b_j`` sum to one). ``mismatch_w`` draws an independent
    ``w`` for the vertex side, which must break the identity.
    """
    rng = np.random.default_rng(seed)
    theta_vertices = np.atleast_2d(theta_vertices)
    p_vertices = np.atleast_2d(p_vertices)
    worst = 0.0
    n = np.atleast_2d(W).shape[0]
    for _ in range(samples):
        a = rng.dirichlet(np.ones(len(theta_vertices)))
        bw = rng.dirichlet(np.ones(len(p_vertices)))
        theta = a @ theta_vertices
        p = bw @ p_vertices
        w = sample_disturbances(H_w, 1, rng)[0] if disturbances else np.zeros(n)
        w_v = sample_disturbances(H_w, 1, rng)[0] if mismatch_w else w
        direct = successor_theta(M, W, N, p, theta, w)
        combo = sum(a[i] * bw[j] * successor_theta(M, W, N, p_vertices[j], theta_vertices[i], w_v)
                    for i in range(len(a)) for j in range(len(bw)))
        scale = max(1.0, float(np.abs(direct).max()))
        worst = max(worst, float(np.abs(direct - combo).max()) / scale)
    return DecompositionReport(samples, worst, tol, mismatch_w)


# ---------------------------------------------------------------------------
# volume versus data length


@dataclass
class VolumeRow:
    T: int
    rank: int
    bounded: bool
    volume: float | None
    status: str
    iterations: int
    seconds: float
    error: str = ""


@dataclass
class VolumeTable:
    rows: list[VolumeRow]
    slack: float = TREND_SLACK

    @property
    def volumes(self) -> list[float | None]:
        return [r.volume for r in self.rows]

    @property
    def trend_ok(self) -> bool:
        """Non-decreasing within ``slack`` between consecutive solved rows."""
        vols = [v for v in self.volumes if v is not None]
        if len(vols) != len(self.rows):
            return False
        return all(b >= a * (1 - self.slack) for a, b in zip(vols, vols[1:]))

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "slack": self.slack,
                "trend_ok": self.trend_ok}

    def to_csv(self, path) -> None:
        cols = ["T", "rank", "bounded", "volume", "status", "iterations", "seconds", "error"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.rows:
                d = asdict(r)
                fh.write(",".join("" if d[c] is None else str(d[c]) for c in cols) + "\n")


def volume_vs_T(traj: Trajectory, T_list, cfg: SynthesisConfig,
                slack: float = TREND_SLACK) -> VolumeTable:
    """Synthesis on nested prefixes of one trajectory.

    Only nested prefixes carry the shrinking-model-set argument behind the
    trend; independent trajectories per ``T`` are outside this contract.
    """
    T_list = [int(T) for T in T_list]
    if any(b < a for a, b in zip(T_list, T_list[1:])):
        raise ValueError("T_list must be non-decreasing")
    if T_list and T_list[-1] > traj.T:
        raise ValueError(f"trajectory has only {traj.T} samples, need {T_list[-1]}")
    rows = []
    for T in T_list:
        dm = build(traj.prefix(T), cfg.constraints)
        rep = informativity(dm, cfg.constraints)
        t0 = time.perf_counter()
        if not rep.bounded:
            rows.append(VolumeRow(T, rep.rank_Xpu, False, None, "uninformative", 0, 0.0,
                                  "admissible model set unbounded"))
            continue
        try:
            res = synthesize(dm, cfg)
        except SynthesisError as exc:
            rows.append(VolumeRow(T, rep.rank_Xpu, True, None, "failed", 0,
                                  time.perf_counter() - t0, str(exc)))
            continue
        rows.append(VolumeRow(T, rep.rank_Xpu, True, res.volume, res.status,
                              len(res.volume_history), time.perf_counter() - t0))
        logger.info("T=%d volume %.4f", T, res.volume)
    return VolumeTable(rows, slack)


# ---------------------------------------------------------------------------
# combined report


@dataclass
class VerificationReport:
    containment: ContainmentReport
    vertex: VertexReport | None = None
    monte_carlo: MonteCarloReport | None = None
    decomposition: DecompositionReport | None = None
    volume_table: VolumeTable | None = None

    @property
    def passed(self) -> bool:
        parts = [self.containment, self.vertex, self.monte_carlo, self.decomposition]
        ok = all(p.passed for p in parts if p is not None)
        if self.volume_table is not None and len(self.volume_table.rows) > 1:
            ok = ok and self.volume_table.trend_ok
        return ok

    def to_dict(self) -> dict:
        out = {"passed": self.passed, "containment": self.containment.to_dict()}
        for name in ("vertex", "monte_carlo", "decomposition", "volume_table"):
            part = getattr(self, name)
            out[name] = None if part is None else part.to_dict()
        return out


def set_volume(W, C) -> float:
    V = polytope.transform(polytope.symmetric_band_vertices(C), W)
    return polytope.volume(V)
