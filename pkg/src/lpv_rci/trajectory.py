"""LPV plants, measured trajectories and constraint sets.

The plant is ``x+ = sum_j p_j A^j x + B u + w``. Trajectories are stored as
columnar CSV (one row per time step); plant and constraint data as JSON with
row-major matrix arrays.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .polytope import PolytopeH, enumerate_vertices, in_convex_hull

logger = logging.getLogger(__name__)

SCHEDULING_TOL = 1e-9


class TrajectoryError(ValueError):
    pass


class TrajectoryFormatError(TrajectoryError):
    """Malformed trajectory file; ``line`` is the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LpvPlant:
    A_list: tuple[np.ndarray, ...]
    B: np.ndarray

    def __post_init__(self):
        A = tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A_list)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if not A:
            raise ValueError("at least one scheduling matrix is required")
        n = A[0].shape[0]
        if any(a.shape != (n, n) for a in A):
            raise ValueError("all A matrices must be square with a common size")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows")
        object.__setattr__(self, "A_list", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A_list[0].shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def s(self) -> int:
        return len(self.A_list)

    @property
    def M(self) -> np.ndarray:
        """Stacked model matrix ``[A^1 ... A^s B]``."""
        return np.hstack(list(self.A_list) + [self.B])

    def A(self, p) -> np.ndarray:
        return sum(pj * Aj for pj, Aj in zip(p, self.A_list))

    def step(self, x, u, p, w=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.A(p) @ x + self.B @ np.atleast_1d(u)
        return out if w is None else out + w


@dataclass(frozen=True)
class ConstraintSets:
    """State, input and disturbance sets plus scheduling polytope vertices.

    ``X = {x : H_x x <= 1}``, ``U = {u : H_u u <= 1}``,
    ``W = {w : -1 <= H_w w <= 1}``, ``P = conv(scheduling_vertices)``.
    """

    H_x: np.ndarray
    H_u: np.ndarray
    H_w: np.ndarray
    scheduling_vertices: np.ndarray

    def __post_init__(self):
        for name in ("H_x", "H_u", "H_w", "scheduling_vertices"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        if self.H_w.size == 0 or self.H_u.size == 0 or self.H_x.size == 0:
            raise ValueError("constraint matrices must be nonempty")
        if self.H_x.shape[1] != self.H_w.shape[1]:
            raise ValueError("H_x and H_w must act on the same state dimension")

    @property
    def n(self) -> int:
        return self.H_w.shape[1]

    @property
    def m(self) -> int:
        return self.H_u.shape[1]

    @property
    def s(self) -> int:
        return self.scheduling_vertices.shape[1]

    @property
    def n_x(self) -> int:
        return self.H_x.shape[0]

    @property
    def n_u(self) -> int:
        return self.H_u.shape[0]

    @property
    def n_w(self) -> int:
        return self.H_w.shape[0]

    @property
    def v_p(self) -> int:
        return self.scheduling_vertices.shape[0]

    def H_w_full_column_rank(self) -> bool:
        return int(np.linalg.matrix_rank(self.H_w)) == self.n

    def disturbance_vertices(self) -> np.ndarray:
        return enumerate_vertices(PolytopeH.band(self.H_w)).vertices


@dataclass(frozen=True)
class Trajectory:
    """``T+1`` states with ``T`` inputs, scheduling samples and (optionally) disturbances."""

    states: np.ndarray
    inputs: np.ndarray
    scheduling: np.ndarray
    disturbances: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.states, dtype=float))
        T = x.shape[0] - 1
        u = np.asarray(self.inputs, dtype=float).reshape(T, -1) if T else np.zeros((0, 0))
        p = np.asarray(self.scheduling, dtype=float).reshape(T, -1) if T else np.zeros((0, 0))
        if T < 0:
            raise TrajectoryError("trajectory needs at least one state")
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "scheduling", p)
        if self.disturbances is not None:
            w = np.asarray(self.disturbances, dtype=float).reshape(T, -1) if T else np.zeros((0, x.shape[1]))
            if w.shape[1] != x.shape[1]:
                raise TrajectoryError("disturbances must have the state dimension")
            object.__setattr__(self, "disturbances", w)

    @property
    def T(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def s(self) -> int:
        return self.scheduling.shape[1]

    def prefix(self, T: int) -> "Trajectory":
        """First ``T`` transitions."""
        if not 0 <= T <= self.T:
            raise TrajectoryError(f"prefix length {T} outside [0, {self.T}]")
        w = None if self.disturbances is None else self.disturbances[:T]
        return Trajectory(self.states[:T + 1], self.inputs[:T], self.scheduling[:T], w)

    def check_scheduling(self, vertices, tol: float = SCHEDULING_TOL) -> None:
        """Raise with the first index whose scheduling sample lies outside ``conv(vertices)``."""
        idx = scheduling_violation(self.scheduling, vertices, tol)
        if idx is not None:
            raise TrajectoryError(f"scheduling sample {idx} lies outside the scheduling polytope")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        same = (np.array_equal(self.states, other.states)
                and np.array_equal(self.inputs, other.inputs)
                and np.array_equal(self.scheduling, other.scheduling))
        if self.disturbances is None or other.disturbances is None:
            return same and self.disturbances is None and other.disturbances is None
        return same and np.array_equal(self.disturbances, other.disturbances)


def scheduling_violation(scheduling, vertices, tol: float = SCHEDULING_TOL) -> int | None:
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    for k, p in enumerate(np.atleast_2d(scheduling)):
        if not in_convex_hull(vertices, p, tol):
            return k
    return None


def simulate(plant: LpvPlant, x0, inputs, scheduling, disturbances=None,
             scheduling_vertices=None) -> Trajectory:
    """Roll the plant forward; ``disturbances=None`` means ``w = 0``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != plant.n:
        raise TrajectoryError(f"x0 has length {x0.shape[0]}, plant has n={plant.n}")
    u = np.asarray(inputs, dtype=float)
    u = u.reshape(len(u), -1)
    T = u.shape[0]
    p = np.asarray(scheduling, dtype=float).reshape(T, -1)
    if u.shape[1] != plant.m or p.shape[1] != plant.s:
        raise TrajectoryError("input/scheduling dimensions do not match the plant")
    w = np.zeros((T, plant.n)) if disturbances is None else np.asarray(disturbances, dtype=float)
    if w.shape != (T, plant.n):
        raise TrajectoryError("disturbance array must be T x n")
    if scheduling_vertices is not None:
        idx = scheduling_violation(p, scheduling_vertices)
        if idx is not None:
            raise TrajectoryError(f"scheduling sample {idx} lies outside the scheduling polytope")
    x = np.empty((T + 1, plant.n))
    x[0] = x0
    for k in range(T):
        x[k + 1] = plant.A(p[k]) @ x[k] + plant.B @ u[k] + w[k]
    return Trajectory(x, u, p, None if disturbances is None else w)


def sample_disturbances(H_w, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from ``{w : -1 <= H_w w <= 1}``.

    Diagonal ``H_w`` gives a box sampled directly; otherwise rejection
    sampling from the bounding box of the set.
    """
    H_w = np.atleast_2d(np.asarray(H_w, dtype=float))
    n = H_w.shape[1]
    if H_w.shape[0] == n and np.allclose(H_w, np.diag(np.diag(H_w))):
        half = 1.0 / np.abs(np.diag(H_w))
        return rng.uniform(-half, half, size=(count, n))
    V = enumerate_vertices(PolytopeH.band(H_w)).vertices
    lo, hi = V.min(axis=0), V.max(axis=0)
    out = np.empty((0, n))
    while out.shape[0] < count:
        cand = rng.uniform(lo, hi, size=(max(2 * count, 16), n))
        keep = np.all(np.abs(cand @ H_w.T) <= 1.0, axis=1)
        out = np.vstack([out, cand[keep]])
    return out[:count]


def sample_scheduling(vertices, count: int, rng: np.random.Generator) -> np.ndarray:
    """Convex combinations of ``vertices`` with flat-Dirichlet weights."""
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    if V.size == 0:
        raise TrajectoryError("scheduling polytope has no vertices")
    if V.shape[0] == 1:
        return np.repeat(V, count, axis=0)
    weights = rng.dirichlet(np.ones(V.shape[0]), size=count)
    return weights @ V


def generate_excitation(T: int, input_box, scheduling_vertices, seed: int,
                        H_w=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random excitation signals for data collection.

    Args:
        T: number of transitions.
        input_box: ``(lower, upper)`` per input channel, shape ``m x 2``.
        scheduling_vertices: vertices of the scheduling polytope.
        seed: RNG seed; identical seeds give bit-identical signals.
        H_w: disturbance set matrix; ``None`` returns zero disturbances.

    Returns:
        ``(inputs, scheduling, disturbances)`` with ``T`` rows each;
        ``disturbances`` is ``None`` when ``H_w`` is not given.
    """
    if T < 1:
        raise TrajectoryError("T must be at least 1")
    box = np.atleast_2d(np.asarray(input_box, dtype=float))
    if box.shape[1] != 2:
        raise TrajectoryError("input_box must be an m x 2 array of (lower, upper)")
    rng = np.random.default_rng(seed)
    u = rng.uniform(box[:, 0], box[:, 1], size=(T, box.shape[0]))
    p = sample_scheduling(scheduling_vertices, T, rng)
    w = None if H_w is None else sample_disturbances(H_w, T, rng)
    return u, p, w


# ---------------------------------------------------------------------------
# CSV trajectory files


def _header(n: int, m: int, s: int, with_w: bool) -> list[str]:
    cols = [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
    cols += [f"p{i + 1}" for i in range(s)]
    if with_w:
        cols += [f"w{i + 1}" for i in range(n)]
    return cols


def save_trajectory(traj: Trajectory, path) -> None:
    """Write the trajectory as CSV; the final row carries the last state only."""
    with_w = traj.disturbances is not None
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_header(traj.n, traj.m, traj.s, with_w))
    for k in range(traj.T + 1):
        row = [repr(float(v)) for v in traj.states[k]]
        if k < traj.T:
            row += [repr(float(v)) for v in traj.inputs[k]]
            row += [repr(float(v)) for v in traj.scheduling[k]]
            if with_w:
                row += [repr(float(v)) for v in traj.disturbances[k]]
        else:
            row += [""] * (traj.m + traj.s + (traj.n if with_w else 0))
        writer.writerow(row)
    Path(path).write_text(buf.getvalue())


def _parse_header(cols: list[str]) -> tuple[int, int, int, bool]:
    cols = [c.strip() for c in cols]
    counts = {}
    for c in cols:
        if len(c) < 2 or c[0] not in "xupw" or not c[1:].isdigit():
            raise TrajectoryFormatError(f"unexpected column name {c!r}", 1)
        counts[c[0]] = counts.get(c[0], 0) + 1
    n, m, s, nw = (counts.get(k, 0) for k in "xupw")
    if not n or not m or not s:
        raise TrajectoryFormatError("header must name x, u and p columns", 1)
    if nw not in (0, n):
        raise TrajectoryFormatError("disturbance columns must match the state dimension", 1)
    if cols != _header(n, m, s, bool(nw)):
        raise TrajectoryFormatError("columns must be ordered x1..xn, u1..um, p1..ps, w1..wn", 1)
    return n, m, s, bool(nw)


def load_trajectory(path) -> Trajectory:
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise TrajectoryFormatError("empty file", 1)
    n, m, s, with_w = _parse_header(rows[0])
    width = n + m + s + (n if with_w else 0)
    body = rows[1:]
    if not body:
        raise TrajectoryFormatError("no data rows", 2)
    states, inputs, sched, dist = [], [], [], []
    last = len(body) - 1
    for idx, row in enumerate(body):
        line = idx + 2
        if len(row) != width:
            raise TrajectoryFormatError(f"expected {width} fields, found {len(row)}", line)
        try:
            states.append([float(v) for v in row[:n]])
            rest = row[n:]
            if idx == last:
                if any(v.strip() for v in rest):
                    raise TrajectoryFormatError("final row must carry the state only", line)
                continue
            vals = [float(v) for v in rest]
        except ValueError as exc:
            raise TrajectoryFormatError(f"cannot parse number ({exc})", line) from None
        inputs.append(vals[:m])
        sched.append(vals[m:m + s])
        if with_w:
            dist.append(vals[m + s:])
    if len(states) < 2:
        raise TrajectoryFormatError("empty trajectory")
    return Trajectory(np.array(states), np.array(inputs), np.array(sched),
                      np.array(dist) if with_w else None)


# ---------------------------------------------------------------------------
# JSON configs


def _matrix(obj, name: str, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: not a numeric matrix") from None
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or (rows is not None and arr.shape[0] != rows) or (
            cols is not None and arr.shape[1] != cols):
        raise ConfigError(f"{name}: expected shape ({rows}, {cols}), got {arr.shape}")
    return arr


def plant_from_dict(cfg: dict) -> LpvPlant:
    try:
        n, m, s = int(cfg["n"]), int(cfg["m"]), int(cfg["s"])
        plant = cfg["plant"]
        A = [_matrix(a, f"plant.A[{j}]", n, n) for j, a in enumerate(plant["A"])]
        B = _matrix(plant["B"], "plant.B", n, m)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    if len(A) != s:
        raise ConfigError(f"plant.A has {len(A)} matrices, expected s={s}")
    return LpvPlant(tuple(A), B)


def constraints_from_dict(cfg: dict) -> ConstraintSets:
    try:
        n, m, s = int(cfg["n"]), int(cfg["m"]), int(cfg["s"])
        c = cfg["constraints"]
        H_x = _matrix(c["H_x"], "constraints.H_x", c.get("n_x"), n)
        H_u = _matrix(c["H_u"], "constraints.H_u", c.get("n_u"), m)
        H_w = _matrix(c["H_w"], "constraints.H_w", c.get("n_w"), n)
        P = _matrix(c["scheduling_vertices"], "constraints.scheduling_vertices", None, s)
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    return ConstraintSets(H_x, H_u, H_w, P)


def constraints_to_dict(cs: ConstraintSets) -> dict:
    return {
        "n_x": cs.n_x, "n_u": cs.n_u, "n_w": cs.n_w,
        "H_x": cs.H_x.tolist(), "H_u": cs.H_u.tolist(), "H_w": cs.H_w.tolist(),
        "scheduling_vertices": cs.scheduling_vertices.tolist(),
    }


def plant_to_dict(plant: LpvPlant) -> dict:
    return {"A": [a.tolist() for a in plant.A_list], "B": plant.B.tolist()}


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def random_plant(n: int, m: int, s: int, rng: np.random.Generator,
                 scale: float = 0.5) -> LpvPlant:
    A = tuple(scale * rng.standard_normal((n, n)) for _ in range(s))
    return LpvPlant(A, rng.standard_normal((n, m)))

