"""Particle-based curriculum via constrained Wasserstein-2 transport.

The training distribution is a set of N particles.  Every iteration draws N
fresh targets from the target distribution, matches particles to targets by
a minimum-cost assignment, and moves each particle at most ``epsilon`` towards
its target, staying inside the region where the predicted success metric
clears ``delta``.  All geometry happens in whitened coordinates, so the
Euclidean and Mahalanobis variants share one code path.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import betaincc, betainccinv

from .assignment import wasserstein2
from .competence import BufferSnapshot, PerformanceBuffer, Regressor, predict, update_buffer
from .metric import MetricSpec, pairwise_distances

__all__ = [
    "Phase",
    "CurrotConfig",
    "CurriculumState",
    "StepStats",
    "epsilon_default",
    "warmup_check",
    "half_ball_sample",
    "cone_sample",
    "update_particle",
    "update_particles",
    "curriculum_step",
    "particle_rng",
]

Feasibility = Callable[[np.ndarray], np.ndarray]


class Phase(str, enum.Enum):
    WARMUP = "warmup"
    ACTIVE = "active"


@dataclass(frozen=True)
class CurrotConfig:
    epsilon: float
    delta: float
    metric: MetricSpec
    bandwidth: float | None = None
    theta: float = 0.25 * math.pi
    candidates_per_particle: int = 128
    sampler: str = "cone"
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.theta < 0.5 * math.pi:
            raise ValueError("theta must lie in (0, pi/2)")
        if self.candidates_per_particle < 1:
            raise ValueError("need at least one candidate per particle")
        if self.sampler not in ("cone", "half_ball"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.bandwidth is None:
            object.__setattr__(self, "bandwidth", 0.3 * self.epsilon)

    @property
    def regressor(self) -> Regressor:
        return Regressor(self.bandwidth, self.metric)


@dataclass(frozen=True)
class CurriculumState:
    phase: Phase
    particles: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, particles) -> "CurriculumState":
        particles = np.array(particles, dtype=float)
        particles.setflags(write=False)
        return cls(Phase.WARMUP, particles, 0)


@dataclass(frozen=True)
class StepStats:
    iteration: int
    phase: Phase
    wasserstein: float
    wasserstein_before: float
    success_rate: float
    moved_fraction: float
    stuck_fraction: float


def epsilon_default(samples, metric: MetricSpec) -> float:
    """Five percent of the largest pairwise distance among ``samples``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples to estimate the diameter")
    diameter = float(pairwise_distances(metric, samples).max())
    if diameter == 0.0:
        warnings.warn("all context samples coincide; epsilon is 0", RuntimeWarning, stacklevel=2)
    return 0.05 * diameter


def warmup_check(reg: Regressor, buffer: PerformanceBuffer | BufferSnapshot, p0, delta: float) -> bool:
    """True once the mean predicted metric over ``p0`` reaches ``delta``."""
    if len(buffer) == 0:
        return False
    return float(np.mean(predict(reg, buffer, np.atleast_2d(p0)))) >= delta


def _unit_ball(rng: np.random.Generator, dim: int, size: int) -> np.ndarray:
    x = rng.standard_normal((size, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * rng.random((size, 1)) ** (1.0 / dim)


def half_ball_sample(center, target, epsilon: float, rng: np.random.Generator, size: int | None = None):
    """Uniform draw from the epsilon-ball around ``center`` on the side facing ``target``.

    Points on the wrong side are reflected through ``center``, which maps the
    ball onto itself and preserves uniformity.
    """
    center = np.asarray(center, dtype=float)
    direction = np.asarray(target, dtype=float) - center
    x = epsilon * _unit_ball(rng, center.size, 1 if size is None else size)
    x[x @ direction < 0] *= -1.0
    out = center + x
    return out[0] if size is None else out


def cone_sample(center, target, epsilon: float, theta: float, rng: np.random.Generator, size: int | None = None):
    """Draw ``center + r * v`` with ``angle(v, target - center) < theta`` and ``r ~ U[0, epsilon]``.

    The direction is uniform on the spherical cap: its cosine with the
    descent direction follows the truncated law of a coordinate of a uniform
    unit vector, ``(1 + cos) / 2 ~ Beta((n-1)/2, (n-1)/2)``.
    """
    center = np.asarray(center, dtype=float)
    m = 1 if size is None else size
    n = center.size
    axis = np.asarray(target, dtype=float) - center
    axis /= np.linalg.norm(axis)
    if n == 1:
        directions = np.repeat(axis[None, :], m, axis=0)
    else:
        a = 0.5 * (n - 1)
        tail = betaincc(a, a, 0.5 * (1.0 + math.cos(theta)))
        u = rng.random(m)
        cos_beta = 2.0 * betainccinv(a, a, u * tail) - 1.0
        cos_beta = np.clip(cos_beta, math.cos(theta), 1.0)
        ortho = rng.standard_normal((m, n))
        ortho -= np.outer(ortho @ axis, axis)
        ortho /= np.linalg.norm(ortho, axis=1, keepdims=True)
        sin_beta = np.sqrt(np.maximum(1.0 - cos_beta**2, 0.0))
        directions = cos_beta[:, None] * axis + sin_beta[:, None] * ortho
    radius = epsilon * rng.random((m, 1))
    out = center + radius * directions
    return out[0] if size is None else out


def particle_rng(seed: int, iteration: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, iteration, particle)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration, 0, index)))


def _targets_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration, 1)))


def _draw_candidates(zc, zt, config: CurrotConfig, rng) -> np.ndarray:
    S = config.candidates_per_particle
    if np.array_equal(zc, zt):
        return np.repeat(zc[None, :], S, axis=0)
    if config.sampler == "cone":
        return cone_sample(zc, zt, config.epsilon, config.theta, rng, size=S)
    return half_ball_sample(zc, zt, config.epsilon, rng, size=S)


def update_particles(
    particles,
    targets,
    buffer: PerformanceBuffer | BufferSnapshot,
    config: CurrotConfig,
    feasible: Feasibility | None = None,
    iteration: int = 0,
    rngs=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Move every particle towards its target within the trust region.

    Candidates come from the configured sampler (in whitened coordinates);
    the target itself is also a candidate when it lies within ``epsilon``.
    Among candidates predicted to succeed and satisfying ``feasible``, the
    one closest to the target wins; the unchanged particle is the fallback.

    Returns the new particles and a boolean mask of particles that stayed
    put although they were not at their target.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    N, D = particles.shape
    metric = config.metric
    snap = buffer.snapshot() if isinstance(buffer, PerformanceBuffer) else buffer
    Zp = metric.whiten(particles)
    Zt = metric.whiten(targets)
    if rngs is None:
        rngs = [particle_rng(config.seed, iteration, n) for n in range(N)]

    S = config.candidates_per_particle
    cand = np.empty((N, S + 1, D))
    for n in range(N):
        cand[n, :S] = metric.unwhiten(_draw_candidates(Zp[n], Zt[n], config, rngs[n]))
        cand[n, S] = targets[n]
    target_dist = np.linalg.norm(Zt - Zp, axis=1)
    target_ok = target_dist <= config.epsilon

    flat = cand.reshape(-1, D)
    ok = (predict(config.regressor, snap, flat) >= config.delta).reshape(N, S + 1)
    ok[:, S] &= target_ok
    dist = np.linalg.norm(metric.whiten(flat).reshape(N, S + 1, D) - Zt[:, None, :], axis=2)
    dist = np.where(ok, dist, np.inf)
    # candidates in order of distance; the unchanged particle is the fallback,
    # so only strict improvements are worth a feasibility check
    order = np.argsort(dist, axis=1, kind="stable")
    new = particles.copy()
    pending = np.ones(N, dtype=bool)
    for r in range(S + 1):
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            break
        choice = order[idx, r]
        viable = dist[idx, choice] < target_dist[idx]
        pending[idx[~viable]] = False
        idx, choice = idx[viable], choice[viable]
        if idx.size == 0:
            break
        picks = cand[idx, choice]
        good = np.ones(idx.size, dtype=bool) if feasible is None else np.asarray(feasible(picks), dtype=bool)
        new[idx[good]] = picks[good]
        pending[idx[good]] = False
    stuck = np.all(new == particles, axis=1) & (target_dist > 0)
    return new, stuck


def update_particle(particle, target, buffer, config: CurrotConfig, feasible: Feasibility | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Single-particle form of ``update_particles``."""
    rngs = None if rng is None else [rng]
    new, _ = update_particles(particle[None, :], np.asarray(target)[None, :], buffer, config, feasible, rngs=rngs)
    return new[0]


def curriculum_step(
    state: CurriculumState,
    buffer: PerformanceBuffer,
    rollouts,
    config: CurrotConfig,
    mu_sampler: Callable[[np.random.Generator, int], np.ndarray],
    feasible: Feasibility | None = None,
    targets=None,
) -> tuple[CurriculumState, StepStats]:
    """One curriculum iteration.

    1. add ``rollouts`` (one per particle) to the buffers;
    2. during warmup, switch to the active phase once the mean prediction
       over the particles reaches ``delta``;
    3. when active, draw N targets, match them to the particles and move
       every particle.  ``wasserstein_before`` is the auction matching cost,
       and ``wasserstein`` is the exact W2 between the moved particles and
       the same targets.
    """
    N = state.particles.shape[0]
    rollouts = list(rollouts)
    if len(rollouts) != N:
        raise ValueError(f"got {len(rollouts)} rollouts for {N} particles")
    update_buffer(buffer, rollouts)
    success_rate = float(np.mean([r.metric_value >= config.delta for r in rollouts])) if rollouts else 0.0
    iteration = state.iteration + 1
    phase = state.phase
    if phase is Phase.WARMUP and warmup_check(config.regressor, buffer, state.particles, config.delta):
        phase = Phase.ACTIVE
    if phase is Phase.WARMUP:
        stats = StepStats(iteration, phase, math.nan, math.nan, success_rate, 0.0, 0.0)
        return replace(state, iteration=iteration), stats

    if targets is None:
        targets = mu_sampler(_targets_rng(config.seed, iteration), N)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    w_before, match = wasserstein2(state.particles, targets, config.metric)
    matched = targets[match.phi]
    new, stuck = update_particles(state.particles, matched, buffer.snapshot(), config, feasible, iteration)
    w_after, _ = wasserstein2(new, targets, config.metric, method="exact")
    moved = float(np.mean(np.any(new != state.particles, axis=1)))
    new.setflags(write=False)
    stats = StepStats(iteration, phase, w_after, w_before, success_rate, moved, float(np.mean(stuck)))
    return CurriculumState(phase, new, iteration), stats
