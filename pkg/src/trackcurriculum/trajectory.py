"""Jerk-parameterized trajectories of decoupled triple integrators.

Each spatial axis is a triple integrator ``x' = A x + B u`` with state
(position, velocity, acceleration) driven by a piece-wise constant jerk
``u``.  Jerk sequences that return the system to its start state with zero
velocity and acceleration form the null space of the end-time influence
matrix; a context is a vector of coordinates in an orthonormal basis of that
null space, one block of ``K - 3`` coordinates per axis.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "KnotGrid",
    "KernelBasis",
    "Context",
    "BoxRegion",
    "BallRegion",
    "TrajectoryConstraints",
    "FeasibilityReport",
    "NoFeasibleSample",
    "transition_matrix",
    "psi_segment",
    "psi_matrix",
    "kernel_basis",
    "rollout",
    "jerks",
    "check_constraints",
    "sample_ball_feasible",
    "fit_waypoints",
    "eight_grid",
    "write_trajectory_csv",
]

NULL_SPACE_RTOL = 1e-10


@dataclass(frozen=True)
class KnotGrid:
    """Segment boundaries ``t_0 < t_1 < ... < t_K`` of the jerk sequence.

    ``pad_before`` and ``pad_after`` extend the evaluation window beyond the
    knots; the trajectory rests at its start state there.
    """

    knots: tuple[float, ...]
    pad_before: float = 0.0
    pad_after: float = 0.0

    def __post_init__(self):
        knots = tuple(float(t) for t in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) < 5:
            raise ValueError(f"need at least 4 segments (5 knots), got {len(knots) - 1}")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if self.pad_before < 0 or self.pad_after < 0:
            raise ValueError("padding must be non-negative")

    @classmethod
    def uniform(cls, t_start: float, t_end: float, K: int, pad_before=0.0, pad_after=0.0):
        return cls(tuple(np.linspace(t_start, t_end, K + 1)), pad_before, pad_after)

    @property
    def K(self) -> int:
        return len(self.knots) - 1

    @property
    def t_start(self) -> float:
        return self.knots[0]

    @property
    def t_end(self) -> float:
        return self.knots[-1]

    @property
    def horizon(self) -> tuple[float, float]:
        """Full evaluation window including the stationary padding."""
        return self.t_start - self.pad_before, self.t_end + self.pad_after

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.knots)

    def sample_times(self, per_segment: int = 4) -> np.ndarray:
        """``per_segment`` evenly spaced times in every segment, plus ``t_end``."""
        t = self.array
        frac = np.arange(per_segment) / per_segment
        inner = (t[:-1, None] + frac[None, :] * np.diff(t)[:, None]).ravel()
        return np.append(inner, t[-1])

    def to_config(self) -> dict[str, str]:
        return {
            "grid.knots": ",".join(repr(k) for k in self.knots),
            "grid.pad_before": repr(self.pad_before),
            "grid.pad_after": repr(self.pad_after),
        }

    @classmethod
    def from_config(cls, cfg: dict[str, str]) -> "KnotGrid":
        if "grid.preset" in cfg:
            if cfg["grid.preset"] != "eight":
                raise ValueError(f"unknown grid preset {cfg['grid.preset']!r}")
            return eight_grid(int(cfg.get("grid.K", 20)))
        knots = tuple(float(v) for v in cfg["grid.knots"].split(","))
        return cls(knots, float(cfg.get("grid.pad_before", 0)), float(cfg.get("grid.pad_after", 0)))


def eight_grid(K: int = 20) -> KnotGrid:
    """``K`` segments on [1, 11] s with one second of rest on either side."""
    return KnotGrid.uniform(1.0, 11.0, K, pad_before=1.0, pad_after=1.0)


def transition_matrix(dt: float) -> np.ndarray:
    """State transition matrix ``exp(A dt)`` of the triple integrator."""
    return np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])


def psi_segment(t_l: float, t_h: float, t: float) -> np.ndarray:
    """State response at time ``t`` to unit jerk applied on ``[t_l, t_h)``.

    The segment is clipped at ``t`` and contributes nothing before ``t_l``.
    """
    if t_l > t_h:
        raise ValueError(f"segment start {t_l} after its end {t_h}")
    if t < t_l:
        return np.zeros(3)
    t_h = min(t_h, t)
    # integrand is ((t - tau)^2 / 2, t - tau, 1); write in elapsed-time form
    a, b = t - t_l, t - t_h
    return np.array([(a**3 - b**3) / 6.0, (a * a - b * b) / 2.0, t_h - t_l])


def _psi_columns(times: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Vectorized ``psi_segment`` for all (time, segment) pairs: shape (T, 3, K)."""
    t = times[:, None]
    lo = knots[None, :-1]
    hi = np.minimum(knots[None, 1:], t)
    active = t >= lo
    a = np.where(active, t - lo, 0.0)
    b = np.where(active, t - hi, 0.0)
    out = np.empty((times.size, 3, knots.size - 1))
    out[:, 0] = (a**3 - b**3) / 6.0
    out[:, 1] = (a * a - b * b) / 2.0
    out[:, 2] = np.where(active, hi - lo, 0.0)
    return out


def psi_matrix(t: float, grid: KnotGrid) -> np.ndarray:
    """3 x K influence matrix mapping jerks to the state at time ``t``."""
    if not grid.t_start <= t <= grid.t_end:
        raise ValueError(f"t={t} outside grid [{grid.t_start}, {grid.t_end}]")
    return _psi_columns(np.array([float(t)]), grid.array)[0]


def _clip_times(times, grid: KnotGrid) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lo, hi = grid.horizon
    if np.any(times < lo - 1e-12) or np.any(times > hi + 1e-12):
        raise ValueError(f"times outside [{lo}, {hi}]")
    # the state is constant during padding, so clamping to the knots is exact
    return np.clip(times, grid.t_start, grid.t_end)


@dataclass(frozen=True)
class KernelBasis:
    """Orthonormal basis (K x (K-3)) of the jerk sequences that close the trajectory."""

    gamma: np.ndarray
    grid: KnotGrid

    @property
    def dim(self) -> int:
        return self.gamma.shape[1]


@functools.lru_cache(maxsize=64)
def kernel_basis(grid: KnotGrid) -> KernelBasis:
    """Null space of the end-time influence matrix via SVD.

    Columns are sign-normalized so that the first non-negligible entry is
    positive, which makes the basis a deterministic function of the grid.
    """
    if grid.K < 4:
        raise ValueError("kernel is empty for fewer than 4 segments")
    psi_end = psi_matrix(grid.t_end, grid)
    _, s, vt = np.linalg.svd(psi_end)
    rank = int(np.sum(s > NULL_SPACE_RTOL * s[0]))
    gamma = vt[rank:].T.copy()
    for j in range(gamma.shape[1]):
        col = gamma[:, j]
        first = np.flatnonzero(np.abs(col) > 1e-12)[0]
        if col[first] < 0:
            gamma[:, j] = -col
    gamma.setflags(write=False)
    return KernelBasis(gamma, grid)


@dataclass(frozen=True)
class Context:
    """Kernel coordinates of a trajectory, axis-major: ``[u~_1, u~_2, u~_3]``."""

    coords: np.ndarray
    start: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).ravel()
        start = np.asarray(self.start, dtype=float).ravel()
        if coords.size % start.size:
            raise ValueError(f"{coords.size} coordinates do not split over {start.size} axes")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "start", start)

    @property
    def axes(self) -> int:
        return self.start.size

    @classmethod
    def zeros(cls, grid: KnotGrid, start) -> "Context":
        start = np.asarray(start, dtype=float).ravel()
        return cls(np.zeros(start.size * (grid.K - 3)), start)

    def per_axis(self) -> np.ndarray:
        return self.coords.reshape(self.axes, -1)


def _check_dims(context: Context, grid: KnotGrid):
    if context.coords.size != context.axes * (grid.K - 3):
        raise ValueError(
            f"context has {context.coords.size} coords, grid expects "
            f"{context.axes} x {grid.K - 3}"
        )


def jerks(context: Context, grid: KnotGrid) -> np.ndarray:
    """Per-axis jerk sequences, shape (axes, K)."""
    _check_dims(context, grid)
    return context.per_axis() @ kernel_basis(grid).gamma.T


def rollout(context: Context, grid: KnotGrid, times) -> np.ndarray:
    """States at ``times``, shape (T, axes, 3) with (position, velocity, acceleration).

    The start state ``[p0, 0, 0]`` is a fixed point of the free dynamics, so
    the homogeneous part reduces to the start state itself.
    """
    u = jerks(context, grid)
    psi = _psi_columns(_clip_times(times, grid), grid.array)
    states = np.einsum("tsk,ak->tas", psi, u)
    states[:, :, 0] += context.start
    return states


def _position_operator(grid: KnotGrid, times: np.ndarray) -> np.ndarray:
    """Maps one axis' kernel coordinates to positions at ``times``: (T, K-3)."""
    psi = _psi_columns(_clip_times(times, grid), grid.array)
    return psi[:, 0, :] @ kernel_basis(grid).gamma


@dataclass(frozen=True)
class BoxRegion:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if np.any(self.lower > self.upper):
            raise ValueError("empty box")

    def distance(self, points: np.ndarray) -> np.ndarray:
        excess = np.maximum(self.lower - points, 0) + np.maximum(points - self.upper, 0)
        return np.linalg.norm(excess, axis=-1)


@dataclass(frozen=True)
class BallRegion:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius >= 0:
            raise ValueError("ball radius must be non-negative")

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.maximum(np.linalg.norm(points - self.center, axis=-1) - self.radius, 0.0)


@dataclass(frozen=True)
class TrajectoryConstraints:
    """Convex position set plus an upper bound on the jerk vector norm.

    ``position_set=None`` means all of space.
    """

    position_set: BoxRegion | BallRegion | None = None
    jerk_bound: float = np.inf
    samples_per_segment: int = 4

    def __post_init__(self):
        if not self.jerk_bound > 0:
            raise ValueError("jerk bound must be positive")

    def to_config(self) -> dict[str, str]:
        cfg = {
            "constraints.jerk_bound": repr(float(self.jerk_bound)),
            "constraints.samples_per_segment": str(self.samples_per_segment),
        }
        region = self.position_set
        if isinstance(region, BoxRegion):
            cfg["constraints.region"] = "box"
            cfg["constraints.lower"] = ",".join(repr(float(v)) for v in region.lower)
            cfg["constraints.upper"] = ",".join(repr(float(v)) for v in region.upper)
        elif isinstance(region, BallRegion):
            cfg["constraints.region"] = "ball"
            cfg["constraints.center"] = ",".join(repr(float(v)) for v in region.center)
            cfg["constraints.radius"] = repr(float(region.radius))
        else:
            cfg["constraints.region"] = "none"
        return cfg

    @classmethod
    def from_config(cls, cfg: dict[str, str]) -> "TrajectoryConstraints":
        def vec(key):
            return np.array([float(v) for v in cfg[key].split(",")])

        kind = cfg.get("constraints.region", "none")
        if kind == "box":
            region = BoxRegion(vec("constraints.lower"), vec("constraints.upper"))
        elif kind == "ball":
            region = BallRegion(vec("constraints.center"), float(cfg["constraints.radius"]))
        elif kind == "none":
            region = None
        else:
            raise ValueError(f"unknown region kind {kind!r}")
        return cls(
            region,
            float(cfg.get("constraints.jerk_bound", "inf")),
            int(cfg.get("constraints.samples_per_segment", 4)),
        )


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    max_position_violation: float
    max_jerk_violation: float
    sample_times: np.ndarray


def check_constraints(
    context: Context,
    grid: KnotGrid,
    constraints: TrajectoryConstraints,
    sample_times=None,
) -> FeasibilityReport:
    """Check positions on a sample grid and the exact per-segment jerk norms.

    Jerk is piece-wise constant, so the jerk check is exact.  Positions are
    only checked at ``sample_times`` (default: ``samples_per_segment`` per
    segment plus the end point).
    """
    if sample_times is None:
        sample_times = grid.sample_times(constraints.samples_per_segment)
    sample_times = np.asarray(sample_times, dtype=float)
    jerk_norm = np.linalg.norm(jerks(context, grid), axis=0)
    jerk_violation = float(np.max(np.maximum(jerk_norm - constraints.jerk_bound, 0.0)))
    pos_violation = 0.0
    if constraints.position_set is not None:
        positions = rollout(context, grid, sample_times)[:, :, 0]
        pos_violation = float(np.max(constraints.position_set.distance(positions)))
    return FeasibilityReport(
        pos_violation == 0.0 and jerk_violation == 0.0,
        pos_violation,
        jerk_violation,
        sample_times,
    )


class FeasibilityChecker:
    """Batched feasibility test for many contexts sharing a grid and start.

    Equivalent to ``check_constraints(...).feasible`` applied row by row.
    """

    def __init__(self, grid: KnotGrid, constraints: TrajectoryConstraints | None, start):
        self.grid = grid
        self.constraints = constraints
        self.start = np.asarray(start, dtype=float)
        if constraints is not None:
            times = grid.sample_times(constraints.samples_per_segment)
            self._pos_op = _position_operator(grid, times)
            self._gamma = kernel_basis(grid).gamma

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(coords)
        n = coords.shape[0]
        if self.constraints is None:
            return np.ones(n, dtype=bool)
        blocks = coords.reshape(n, self.start.size, -1)
        ok = np.ones(n, dtype=bool)
        if np.isfinite(self.constraints.jerk_bound):
            u = blocks @ self._gamma.T
            ok &= np.linalg.norm(u, axis=1).max(axis=1) <= self.constraints.jerk_bound
        if self.constraints.position_set is not None:
            pos = np.einsum("tk,nak->nta", self._pos_op, blocks) + self.start
            ok &= self.constraints.position_set.distance(pos).max(axis=1) == 0.0
        return ok


class NoFeasibleSample(RuntimeError):
    """Rejection sampling exhausted its budget without a feasible draw."""


def _uniform_ball(rng: np.random.Generator, dim: int, radius: float, size=None) -> np.ndarray:
    shape = (dim,) if size is None else (size, dim)
    direction = rng.standard_normal(shape)
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    r = radius * rng.random(() if size is None else (size, 1)) ** (1.0 / dim)
    return r * direction


def sample_ball_feasible(
    center: Context,
    radius: float,
    metric,
    grid: KnotGrid,
    constraints: TrajectoryConstraints,
    max_tries: int,
    rng: np.random.Generator,
    return_tries: bool = False,
):
    """Rejection-sample a feasible context from the metric ball around ``center``.

    Proposals are uniform in the ball of the whitened coordinates of
    ``metric``.  Raises ``NoFeasibleSample`` after ``max_tries`` rejections.
    """
    if radius == 0:
        return (center, 1) if return_tries else center
    for tries in range(1, max_tries + 1):
        offset = metric.unwhiten(_uniform_ball(rng, center.coords.size, radius))
        candidate = Context(center.coords + offset, center.start)
        if check_constraints(candidate, grid, constraints).feasible:
            return (candidate, tries) if return_tries else candidate
    raise NoFeasibleSample(f"no feasible sample in {max_tries} tries (radius {radius})")


def fit_waypoints(
    times: Sequence[float],
    positions,
    grid: KnotGrid,
    ridge: float = 0.0,
    start=None,
) -> Context:
    """Ridge least-squares fit of kernel coordinates to position waypoints.

    Axes are decoupled, so each axis is an independent ``(T, K-3)`` problem.
    ``start`` defaults to the waypoint with the earliest time.
    """
    times = np.asarray(times, dtype=float)
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[0] != times.size:
        positions = positions.T
    if start is None:
        start = positions[np.argmin(times)]
    start = np.asarray(start, dtype=float)
    X = _position_operator(grid, times)
    return Context(_solve_ridge(X, positions - start, ridge).T.ravel(), start)


def _solve_ridge(X: np.ndarray, Y: np.ndarray, ridge: float) -> np.ndarray:
    n = X.shape[1]
    if ridge == 0:
        if np.linalg.matrix_rank(X) < n:
            raise np.linalg.LinAlgError("design matrix is rank deficient; use ridge > 0")
        return np.linalg.lstsq(X, Y, rcond=None)[0]
    Xa = np.vstack([X, np.sqrt(ridge) * np.eye(n)])
    Ya = np.vstack([Y, np.zeros((n, Y.shape[1]))])
    return np.linalg.lstsq(Xa, Ya, rcond=None)[0]


def write_trajectory_csv(path, context: Context, grid: KnotGrid, times: Iterable[float]):
    """Write columns t, axis, position, velocity, acceleration."""
    times = np.asarray(list(times), dtype=float)
    states = rollout(context, grid, times)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "axis", "position", "velocity", "acceleration"])
        for i, t in enumerate(times):
            for a in range(context.axes):
                writer.writerow([repr(float(t)), a, *(repr(float(v)) for v in states[i, a])])
