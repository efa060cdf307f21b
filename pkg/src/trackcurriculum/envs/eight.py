"""Eight-shaped target trajectories on a sphere and their two parameterizations.

Low-dimensional: the amplitude pair ``(a_x, a_y)``.  High-dimensional: kernel
coordinates of the jerk sequence fitted to the analytic eight.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from ..trajectory import (
    BoxRegion,
    Context,
    KnotGrid,
    TrajectoryConstraints,
    _position_operator,
    eight_grid,
    rollout,
)

__all__ = [
    "EightTargetSpec",
    "eight_trajectory",
    "low_dim_to_context",
    "low_dim_to_coords",
    "fit_error",
    "mu_sampler",
    "FIT_TOLERANCE",
]

FIT_TOLERANCE = 1e-3


def _smooth_phase(tau, ramp: float = 0.2):
    """Ramp-cruise-ramp time scaling with zero rate and curvature at both ends.

    The phase rate rises along a cubic smoothstep over the first ``ramp``
    fraction, stays constant, and mirrors the ramp at the end.  The low peak
    rate keeps the eight within reach of a coarse jerk grid.
    """
    tau = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    rate = 1.0 / (1.0 - ramp)

    def head(t):
        x = t / ramp
        return rate * ramp * (x**3 - 0.5 * x**4)

    cruise = rate * (0.5 * ramp + tau - ramp)
    return np.where(tau < ramp, head(tau), np.where(tau > 1.0 - ramp, 1.0 - head(1.0 - tau), cruise))


@dataclass(frozen=True)
class EightTargetSpec:
    """Target distribution over eights; amplitudes are maximal x / y excursions."""

    amp_x_range: tuple[float, float] = (0.36, 0.40)
    amp_y_range: tuple[float, float] = (0.18, 0.20)
    sphere_radius: float = 0.8
    sphere_center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    period: float = 12.0
    grid: KnotGrid = field(default_factory=eight_grid)
    fit_samples_per_segment: int = 25
    smooth_phase: bool = True

    def __post_init__(self):
        for lo, hi in (self.amp_x_range, self.amp_y_range):
            if not 0 <= lo <= hi:
                raise ValueError("amplitude ranges must satisfy 0 <= low <= high")
        if max(self.amp_x_range[1], self.amp_y_range[1]) >= self.sphere_radius:
            raise ValueError("amplitudes must stay below the sphere radius")

    @property
    def start(self) -> np.ndarray:
        return np.asarray(self.sphere_center) + np.array([0.0, 0.0, self.sphere_radius])

    @property
    def t_move(self) -> tuple[float, float]:
        return self.grid.t_start, self.grid.t_end

    def phase(self, t):
        t0, t1 = self.t_move
        tau = (np.asarray(t, dtype=float) - t0) / (t1 - t0)
        return _smooth_phase(tau) if self.smooth_phase else np.clip(tau, 0.0, 1.0)

    def check_amplitudes(self, a_x, a_y):
        if not (0 <= a_x <= self.amp_x_range[1] and 0 <= a_y <= self.amp_y_range[1]):
            raise ValueError(
                f"amplitudes ({a_x}, {a_y}) outside [0, {self.amp_x_range[1]}] x [0, {self.amp_y_range[1]}]"
            )

    def position_constraints(self, margin: float = 0.05, jerk_bound: float = np.inf) -> TrajectoryConstraints:
        """Box around every eight of the family, padded by ``margin``."""
        c = np.asarray(self.sphere_center)
        ax, ay = self.amp_x_range[1], self.amp_y_range[1]
        z_low = np.sqrt(self.sphere_radius**2 - ax**2 - ay**2)
        lower = c + np.array([-ax, -ay, z_low]) - margin
        upper = c + np.array([ax, ay, self.sphere_radius]) + margin
        return TrajectoryConstraints(BoxRegion(lower, upper), jerk_bound)


def eight_trajectory(a_x: float, a_y: float, spec: EightTargetSpec, t) -> np.ndarray:
    """Position(s) on the eight at time(s) ``t``: shape (3,) or (T, 3).

    Planar Lissajous curve with frequencies (1, 2), lifted onto the sphere.
    """
    spec.check_amplitudes(a_x, a_y)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > spec.period):
        raise ValueError(f"t outside [0, {spec.period}]")
    s = spec.phase(t_arr)
    x = a_x * np.sin(2 * np.pi * s)
    y = a_y * np.sin(4 * np.pi * s)
    z = np.sqrt(spec.sphere_radius**2 - x**2 - y**2)
    return np.stack([x, y, z], axis=-1) + np.asarray(spec.sphere_center)


@functools.lru_cache(maxsize=8)
def _fit_operator(spec: EightTargetSpec):
    grid = spec.grid
    times = grid.sample_times(spec.fit_samples_per_segment)
    X = _position_operator(grid, times)
    return times, np.linalg.pinv(X)


def _fit(a_x, a_y, spec: EightTargetSpec) -> np.ndarray:
    times, pinv = _fit_operator(spec)
    offsets = eight_trajectory(a_x, a_y, spec, times) - spec.start
    return (pinv @ offsets).T.ravel()


def fit_error(context: Context, a_x, a_y, spec: EightTargetSpec, n: int = 2001) -> float:
    """Max position deviation between a context's rollout and the analytic eight."""
    t = np.linspace(0.0, spec.period, n)
    pos = rollout(context, spec.grid, t)[:, :, 0]
    return float(np.max(np.linalg.norm(pos - eight_trajectory(a_x, a_y, spec, t), axis=1)))


def low_dim_to_context(a_x: float, a_y: float, spec: EightTargetSpec, check: bool = True) -> Context:
    """Least-squares kernel coordinates reproducing the eight with amplitudes (a_x, a_y)."""
    spec.check_amplitudes(a_x, a_y)
    context = Context(_fit(a_x, a_y, spec), spec.start)
    if check:
        err = fit_error(context, a_x, a_y, spec, n=601)
        if err > 10 * FIT_TOLERANCE:
            raise ValueError(f"eight fit error {err:.3g} m exceeds {10 * FIT_TOLERANCE} m")
    return context


def low_dim_to_coords(amplitudes, spec: EightTargetSpec) -> np.ndarray:
    """Batched map of (n, 2) amplitude pairs to (n, D) kernel coordinates."""
    amplitudes = np.atleast_2d(np.asarray(amplitudes, dtype=float))
    for a_x, a_y in amplitudes:
        spec.check_amplitudes(a_x, a_y)
    times, pinv = _fit_operator(spec)
    s = spec.phase(times)
    x = amplitudes[:, :1] * np.sin(2 * np.pi * s)
    y = amplitudes[:, 1:] * np.sin(4 * np.pi * s)
    z = np.sqrt(spec.sphere_radius**2 - x**2 - y**2)
    offsets = np.stack([x, y, z], axis=-1) + np.asarray(spec.sphere_center) - spec.start  # (n, T, 3)
    coords = np.einsum("kt,ntj->njk", pinv, offsets)
    return coords.reshape(amplitudes.shape[0], -1)


def mu_sampler(spec: EightTargetSpec, rng: np.random.Generator, n: int | None = None, high_dim: bool = True):
    """Draw from the target distribution: uniform amplitudes on the configured ranges.

    Returns kernel coordinates (high-dimensional) or amplitude pairs.
    """
    m = 1 if n is None else n
    amps = np.column_stack([
        rng.uniform(*spec.amp_x_range, size=m),
        rng.uniform(*spec.amp_y_range, size=m),
    ])
    out = low_dim_to_coords(amps, spec) if high_dim else amps
    return out[0] if n is None else out
