"""Solver backends, SDPA-format export and independent certificate checks.

Backends
--------
``cvxpy``
    Native path. The flat parameter vector becomes one ``cvxpy.Variable``;
    log-det objectives are passed through ``cvxpy.log_det``. Default solver is
    Clarabel.
``sdpa-file``
    Converts log-det to a geometric-mean epigraph, writes an SDPA sparse file,
    parses it back and solves the parsed problem. Exercises the export path end
    to end without an external binary.
``sdpa``
    Writes an SDPA file and runs an external ``sdpa``-compatible executable
    found on ``PATH`` (or ``RCI_SDPA_BIN``).
"""
from __future__ import annotations

import logging
import os
import re
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .affine import _pad
from .lmi import LmiProgram, logdet_to_geomean

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near-optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"

BACKENDS = ("cvxpy", "sdpa-file", "sdpa")


class BackendUnavailable(RuntimeError):
    pass


@dataclass
class SolverOptions:
    backend: str = "cvxpy"
    solver: str = "CLARABEL"
    feas_tol: float = 1e-6
    gap_tol: float = 1e-8
    verbose: bool = False
    max_iters: int | None = None
    extra: dict = field(default_factory=dict)
    fallbacks: list[dict] | None = None

    @classmethod
    def from_env(cls, **overrides) -> "SolverOptions":
        """Defaults, overridden by ``RCI_SOLVER`` (``backend`` or ``backend:SOLVER``)."""
        opts = cls(**overrides)
        env = os.environ.get("RCI_SOLVER")
        if env and "backend" not in overrides:
            backend, _, solver = env.partition(":")
            opts.backend = backend
            if solver:
                opts.solver = solver.upper()
        return opts


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None
    values: dict = field(default_factory=dict, repr=False)
    objective: float | None = None
    solve_time: float = 0.0
    iterations: int | None = None
    backend: str = ""
    raw_status: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, NEAR_OPTIMAL)


def solve(program: LmiProgram, options: SolverOptions | None = None) -> SolveResult:
    options = options or SolverOptions()
    if options.backend == "cvxpy":
        return _solve_cvxpy(program, options)
    if options.backend == "sdpa-file":
        return _solve_sdpa_file(program, options)
    if options.backend == "sdpa":
        return _solve_sdpa_external(program, options)
    raise ValueError(f"unknown backend {options.backend!r}; choose from {BACKENDS}")


# ---------------------------------------------------------------------------
# cvxpy


_CVXPY_STATUS = {
    "optimal": OPTIMAL,
    "optimal_inaccurate": NEAR_OPTIMAL,
    "infeasible": INFEASIBLE,
    "infeasible_inaccurate": INFEASIBLE,
    "unbounded": UNBOUNDED,
    "unbounded_inaccurate": UNBOUNDED,
}


# alternative settings tried in order when the first attempt stalls
DEFAULT_FALLBACKS = {
    "CLARABEL": [{"max_step_fraction": 0.95}, {"equilibrate_enable": False}],
}


def _solver_kwargs(options: SolverOptions) -> dict:
    kw = dict(options.extra)
    if options.solver == "CLARABEL":
        kw.setdefault("tol_gap_abs", options.gap_tol)
        kw.setdefault("tol_gap_rel", options.gap_tol)
        kw.setdefault("tol_feas", min(options.feas_tol, 1e-8))
        if options.max_iters:
            kw.setdefault("max_iter", options.max_iters)
    elif options.solver == "SCS":
        kw.setdefault("eps", 1e-9)
        kw.setdefault("max_iters", options.max_iters or 200000)
    return kw


def _to_cvxpy(expr, x, nvars):
    import cvxpy as cp

    coef = _pad(expr.coef, nvars)
    flat = coef @ x + expr.const
    return cp.reshape(flat, expr.shape, order="C")


def _solve_cvxpy(program: LmiProgram, options: SolverOptions) -> SolveResult:
    import cvxpy as cp

    nv = program.nvars
    x = cp.Variable(nv)
    cons = []
    for c in program.linear:
        coef = _pad(c.expr.coef, nv)
        cons.append(coef @ x + c.expr.const >= 0)
    for c in program.psd:
        E = _to_cvxpy(c.expr, x, nv)
        cons.append((E + E.T) / 2 >> 0)
    if program.objective is None:
        objective = cp.Minimize(0)
    elif program.objective[0] == "logdet":
        E = _to_cvxpy(program.objective[1], x, nv)
        objective = cp.Maximize(cp.log_det((E + E.T) / 2))
    else:
        objective = cp.Maximize(_to_cvxpy(program.objective[1], x, nv)[0, 0])
    prob = cp.Problem(objective, cons)
    fallbacks = options.fallbacks
    if fallbacks is None:
        fallbacks = DEFAULT_FALLBACKS.get(options.solver, [])
    t0 = time.perf_counter()
    iters = None
    for attempt, override in enumerate([{}] + list(fallbacks)):
        kwargs = {**_solver_kwargs(options), **override}
        try:
            prob.solve(solver=options.solver, verbose=options.verbose, **kwargs)
            raw = prob.status
        except cp.error.SolverError as exc:
            logger.info("solver error (attempt %d): %s", attempt + 1, exc)
            raw = "solver_error"
        status = _CVXPY_STATUS.get(raw, NUMERICAL_FAILURE)
        if status in (OPTIMAL, NEAR_OPTIMAL) and x.value is None:
            status = NUMERICAL_FAILURE
        stats = getattr(prob, "solver_stats", None)
        iters = getattr(stats, "num_iters", None) if stats is not None else None
        if status != NUMERICAL_FAILURE:
            break
        if attempt < len(fallbacks):
            logger.info("retrying with %s", fallbacks[attempt])
    elapsed = time.perf_counter() - t0
    xv = None if x.value is None else np.asarray(x.value, dtype=float).copy()
    return _finish(program, status, xv, elapsed, iters, "cvxpy", raw)


def _finish(program, status, xv, elapsed, iters, backend, raw) -> SolveResult:
    ok = status in (OPTIMAL, NEAR_OPTIMAL) and xv is not None
    return SolveResult(
        status=status,
        x=xv if ok else None,
        values=program.assignments(xv) if ok else {},
        objective=program.objective_value(xv) if ok else None,
        solve_time=elapsed,
        iterations=iters,
        backend=backend,
        raw_status=str(raw),
    )


# ---------------------------------------------------------------------------
# SDPA sparse format


@dataclass
class SdpaProblem:
    """``min c'y  s.t.  sum_i y_i F_i - F_0 >= 0`` over a block-diagonal cone.

    ``blocks`` holds the block structure (negative sizes are diagonal LP
    blocks); ``F[i]`` maps a block index to a dense block for matrix ``i``.
    """

    c: np.ndarray
    blocks: list[int]
    F: list[dict[int, np.ndarray]]

    @property
    def m(self) -> int:
        return len(self.c)


def to_sdpa(program: LmiProgram) -> tuple[SdpaProblem, LmiProgram]:
    """SDPA data for ``program`` (log-det objectives are converted first)."""
    prog = program
    if prog.objective is not None and prog.objective[0] == "logdet":
        prog = logdet_to_geomean(prog)
    nv = prog.nvars
    blocks: list[int] = []
    mats: list[tuple[sp.csr_matrix, np.ndarray, int, bool]] = []
    for con in prog.psd:
        k = con.expr.shape[0]
        blocks.append(k)
        mats.append((_pad(con.expr.coef, nv), con.expr.const, k, False))
    lp_rows = [c.expr for c in prog.linear]
    if lp_rows:
        coef = sp.vstack([_pad(e.coef, nv) for e in lp_rows]).tocsr()
        const = np.concatenate([e.const for e in lp_rows])
        blocks.append(-len(const))
        mats.append((coef, const, len(const), True))
    F: list[dict[int, np.ndarray]] = [dict() for _ in range(nv + 1)]
    for b, (coef, const, k, diag) in enumerate(mats):
        if diag:
            F[0][b] = np.diag(-const)
            csc = coef.tocsc()
            for i in range(nv):
                col = csc[:, i].toarray().ravel()
                if np.any(col):
                    F[i + 1][b] = np.diag(col)
        else:
            F[0][b] = -const.reshape(k, k)
            csc = coef.tocsc()
            for i in range(nv):
                col = csc[:, i]
                if col.nnz:
                    F[i + 1][b] = col.toarray().reshape(k, k)
    c = np.zeros(nv)
    if prog.objective is not None:
        obj = _pad(prog.objective[1].coef, nv).toarray().ravel()
        c = -obj  # maximize -> minimize
    return SdpaProblem(c, blocks, F), prog


def write_sdpa(program: LmiProgram, path) -> LmiProgram:
    """Write ``program`` in SDPA sparse format; returns the program actually written."""
    problem, prog = to_sdpa(program)
    lines = [f'"{prog.name}: {prog.nvars} variables, {len(problem.blocks)} blocks',
             f"{problem.m} = mDIM",
             f"{len(problem.blocks)} = nBLOCK",
             " ".join(str(b) for b in problem.blocks) + " = bLOCKsTRUCT",
             " ".join(f"{v:.17g}" for v in problem.c)]
    for i, mats in enumerate(problem.F):
        for b in sorted(mats):
            M = mats[b]
            rows, cols = np.nonzero(np.triu(M))
            for r, cc in zip(rows, cols):
                lines.append(f"{i} {b + 1} {r + 1} {cc + 1} {M[r, cc]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")
    return prog


def _numbers(line: str) -> list[float]:
    return [float(t) for t in re.findall(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?", line)]


def read_sdpa(path) -> SdpaProblem:
    """Parse an SDPA sparse file (comments start with ``"`` or ``*``)."""
    raw = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in raw if ln and ln[0] not in '"*']
    m = int(_numbers(lines[0])[0])
    nb = int(_numbers(lines[1])[0])
    blocks = [int(v) for v in _numbers(lines[2])[:nb]]
    pos = 3
    c: list[float] = []
    while len(c) < m:
        c.extend(_numbers(lines[pos]))
        pos += 1
    F: list[dict[int, np.ndarray]] = [dict() for _ in range(m + 1)]
    for ln in lines[pos:]:
        vals = _numbers(ln)
        if len(vals) < 5:
            continue
        i, b, r, cc = (int(v) for v in vals[:4])
        v = vals[4]
        size = abs(blocks[b - 1])
        M = F[i].setdefault(b - 1, np.zeros((size, size)))
        M[r - 1, cc - 1] = v
        M[cc - 1, r - 1] = v
    return SdpaProblem(np.array(c[:m]), blocks, F)


def read_sdpa_solution(path, m: int) -> tuple[str, np.ndarray | None]:
    """Status and primal vector from SDPA output (``xVec`` block) or a plain vector file."""
    text = Path(path).read_text()
    phase = re.search(r"phase\.value\s*=\s*(\S+)", text)
    xm = re.search(r"xVec\s*=\s*\{([^}]*)\}", text)
    if xm:
        x = np.array(_numbers(xm.group(1)))
    else:
        nums = _numbers(text.splitlines()[0]) if text.strip() else []
        x = np.array(nums) if len(nums) == m else None
    status = phase.group(1) if phase else ("pdOPT" if x is not None else "unknown")
    if x is not None and len(x) != m:
        x = None
    return status, x


_SDPA_STATUS = {"pdOPT": OPTIMAL, "pdFEAS": NEAR_OPTIMAL, "pFEAS": NEAR_OPTIMAL,
                "pINF_dFEAS": INFEASIBLE, "pINF": INFEASIBLE,
                "pFEAS_dINF": UNBOUNDED, "dINF": UNBOUNDED}


def solve_sdpa_problem(problem: SdpaProblem, options: SolverOptions) -> tuple[str, np.ndarray | None, str]:
    """Solve parsed SDPA data with cvxpy (dense per-block assembly)."""
    import cvxpy as cp

    y = cp.Variable(problem.m)
    cons = []
    for b, size in enumerate(problem.blocks):
        k = abs(size)
        terms = []
        for i in range(1, problem.m + 1):
            Fi = problem.F[i].get(b)
            if Fi is not None:
                terms.append(y[i - 1] * (np.diag(Fi) if size < 0 else Fi))
        F0 = problem.F[0].get(b, np.zeros((k, k)))
        F0 = np.diag(F0) if size < 0 else F0
        expr = sum(terms) - F0 if terms else -F0
        if size < 0:
            cons.append(expr >= 0)
        else:
            cons.append((expr + expr.T) / 2 >> 0)
    prob = cp.Problem(cp.Minimize(problem.c @ y), cons)
    try:
        prob.solve(solver=options.solver, **_solver_kwargs(options))
        raw = prob.status
    except cp.error.SolverError as exc:
        logger.warning("solver error: %s", exc)
        raw = "solver_error"
    yv = None if y.value is None else np.asarray(y.value, dtype=float)
    return _CVXPY_STATUS.get(raw, NUMERICAL_FAILURE), yv, raw


def _solve_sdpa_file(program: LmiProgram, options: SolverOptions) -> SolveResult:
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "problem.dat-s"
        written = write_sdpa(program, path)
        problem = read_sdpa(path)
    status, y, raw = solve_sdpa_problem(problem, options)
    elapsed = time.perf_counter() - t0
    xv = None if y is None else y[:program.nvars]
    res = _finish(program, status, xv, elapsed, None, "sdpa-file", raw)
    if y is not None and written is not program:
        res.values.update({k: v for k, v in written.assignments(y).items() if k.startswith("geomean:")})
    return res


def find_sdpa_binary() -> str | None:
    env = os.environ.get("RCI_SDPA_BIN")
    if env:
        return env if Path(env).exists() else shutil.which(env)
    return shutil.which("sdpa")


def _solve_sdpa_external(program: LmiProgram, options: SolverOptions) -> SolveResult:
    exe = find_sdpa_binary()
    if exe is None:
        raise BackendUnavailable("no sdpa executable found (set RCI_SDPA_BIN or add sdpa to PATH)")
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        inp = Path(tmp) / "problem.dat-s"
        out = Path(tmp) / "problem.out"
        written = write_sdpa(program, inp)
        proc = subprocess.run([exe, str(inp), str(out)], capture_output=True, text=True)
        if proc.returncode != 0 or not out.exists():
            logger.warning("sdpa failed: %s", proc.stderr.strip())
            return SolveResult(NUMERICAL_FAILURE, None, backend="sdpa",
                               solve_time=time.perf_counter() - t0, raw_status="process-error")
        raw, y = read_sdpa_solution(out, written.nvars)
    elapsed = time.perf_counter() - t0
    status = _SDPA_STATUS.get(raw, NUMERICAL_FAILURE)
    xv = None if y is None else y[:program.nvars]
    return _finish(program, status, xv, elapsed, None, "sdpa", raw)


# ---------------------------------------------------------------------------
# certificates


@dataclass
class BlockCheck:
    name: str
    kind: str
    min_value: float
    asymmetry: float = 0.0

    def passed(self, tol: float) -> bool:
        return self.min_value >= -tol


@dataclass
class CertificateReport:
    feas_tol: float
    blocks: list[BlockCheck] = field(default_factory=list)
    linear: list[BlockCheck] = field(default_factory=list)

    @property
    def violations(self) -> list[BlockCheck]:
        return [b for b in self.blocks + self.linear if not b.passed(self.feas_tol)]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def min_eig(self) -> float:
        return min((b.min_value for b in self.blocks), default=np.inf)

    @property
    def min_slack(self) -> float:
        return min((b.min_value for b in self.linear), default=np.inf)

    def summary(self) -> dict:
        return {"passed": self.passed, "feas_tol": self.feas_tol,
                "min_eig": float(self.min_eig), "min_linear_slack": float(self.min_slack),
                "n_blocks": len(self.blocks), "n_linear": len(self.linear),
                "violations": [(v.name, v.min_value) for v in self.violations]}


def check_point(program: LmiProgram, x: np.ndarray, feas_tol: float = 1e-6,
                kinds: set[str] | None = None) -> CertificateReport:
    """Evaluate every constraint of ``program`` at ``x`` with dense linear algebra."""
    report = CertificateReport(feas_tol)
    for c in program.psd:
        if kinds is not None and c.kind not in kinds:
            continue
        E = c.expr.value(x)
        sym = (E + E.T) / 2
        report.blocks.append(BlockCheck(c.name, c.kind, float(np.linalg.eigvalsh(sym)[0]),
                                        float(np.abs(E - E.T).max(initial=0.0))))
    for c in program.linear:
        if kinds is not None and c.kind not in kinds:
            continue
        report.linear.append(BlockCheck(c.name, c.kind, float(c.expr.value(x).min(initial=np.inf))))
    return report


def verify_solution(program: LmiProgram, result: SolveResult | np.ndarray | dict,
                    feas_tol: float = 1e-6) -> CertificateReport:
    """Recompute all constraints from the raw solution.

    ``result`` may be a :class:`SolveResult`, a parameter vector, or a mapping of
    variable values (packed through the program's variable layout).
    """
    if isinstance(result, SolveResult):
        if result.x is None:
            raise ValueError(f"no solution to verify (status {result.status})")
        x = result.x
    elif isinstance(result, dict):
        x = program.pack(result)
    else:
        x = np.asarray(result, dtype=float)
    return check_point(program, x, feas_tol)
