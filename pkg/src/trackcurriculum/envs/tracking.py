"""Delayed-observation point-mass tracker.

A 3-D double integrator follows a reference trajectory with a PD law.  The
controller sees its own state through a lossy FIFO network queue, its
commands pass through an exponential filter, and each step is scored with
the tracking reward.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..competence import RolloutRecord
from ..trajectory import Context, KnotGrid, rollout

__all__ = [
    "DELAY_PMF",
    "DelayQueue",
    "ActionFilter",
    "RewardParams",
    "reward",
    "TrackerSim",
    "tracker_rollout",
]

DELAY_PMF = (0.905, 0.035, 0.02, 0.02, 0.02)


class DelayQueue:
    """FIFO network channel with random integer delays and head-of-line drops.

    Each pushed payload draws a delay in {0, ..., 4} steps.  A payload is
    never released before one pushed earlier.  Every tick first drops the
    head with probability ``drop_prob`` (if the queue is nonempty), then
    delivers all payloads whose release step has come.
    """

    def __init__(self, rng: np.random.Generator, delay_pmf=DELAY_PMF, drop_prob: float = 0.25, block: int = 4096):
        pmf = np.asarray(delay_pmf, dtype=float)
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError("delay pmf must be non-negative and sum to 1")
        if not 0 <= drop_prob <= 1:
            raise ValueError("drop probability must lie in [0, 1]")
        self.rng = rng
        self.delay_pmf = pmf
        self.drop_prob = float(drop_prob)
        self.fifo: deque[tuple[object, int, int]] = deque()
        self.now = 0
        self._last_release = -1
        self._block = block
        self._delays = np.empty(0, dtype=np.intp)
        self._drops = np.empty(0)

    def _next_delay(self) -> int:
        if self._delays.size == 0:
            self._delays = self.rng.choice(self.delay_pmf.size, size=self._block, p=self.delay_pmf)
        d, self._delays = int(self._delays[0]), self._delays[1:]
        return d

    def _next_drop(self) -> bool:
        if self._drops.size == 0:
            self._drops = self.rng.random(self._block)
        u, self._drops = self._drops[0], self._drops[1:]
        return u < self.drop_prob

    def __len__(self):
        return len(self.fifo)

    def push(self, payload) -> int:
        """Enqueue at the current step; returns the drawn delay."""
        delay = self._next_delay()
        release = max(self.now + delay, self._last_release)
        self._last_release = release
        self.fifo.append((payload, self.now, release))
        return delay

    def tick(self) -> list:
        """Advance one step; returns the payloads delivered at this step."""
        if self.fifo and self.drop_prob > 0 and self._next_drop():
            self.fifo.popleft()
        delivered = []
        while self.fifo and self.fifo[0][2] <= self.now:
            delivered.append(self.fifo.popleft()[0])
        self.now += 1
        return delivered


def delay_push(queue: DelayQueue, payload) -> int:
    return queue.push(payload)


def delay_tick(queue: DelayQueue) -> list:
    return queue.tick()


class ActionFilter:
    """First-order low-pass: ``out_t = omega * out_{t-1} + (1 - omega) * in_t``."""

    def __init__(self, omega, initial=None):
        self.omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if np.any(self.omega < 0) or np.any(self.omega > 1):
            raise ValueError("omega must lie in [0, 1]")
        self.state = np.zeros_like(self.omega) if initial is None else np.asarray(initial, dtype=float)

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        if tau.ndim == 0:
            tau = np.broadcast_to(tau, self.state.shape)
        if tau.shape != self.state.shape and self.omega.size != 1:
            raise ValueError(f"action shape {tau.shape} does not match filter {self.state.shape}")
        if self.state.shape != tau.shape:
            self.state = np.broadcast_to(self.state, tau.shape).copy()
        self.state = self.omega * self.state + (1.0 - self.omega) * tau
        return self.state.copy()


def filter_action(filt: ActionFilter, tau) -> np.ndarray:
    return filt(tau)


@dataclass(frozen=True)
class RewardParams:
    alpha: float = -8.0
    discount: float = 0.992
    tracking_weight: float = 1000.0
    velocity_weight: float = 0.1
    posture_weight: float = 0.1
    action_weight: float = 1e-3
    raw_tip_sign: bool = False

    def __post_init__(self):
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")


def reward(tracking_error, vel_sq, posture_sq, action_sq, tipped: bool, params: RewardParams = RewardParams()) -> float:
    """Per-step reward: a tipping penalty, or one minus weighted squared errors.

    The tipping branch is ``-|alpha| / (1 - discount)``; ``raw_tip_sign``
    switches to ``-alpha / (1 - discount)`` with the sign taken literally.
    """
    if tipped:
        magnitude = -params.alpha if params.raw_tip_sign else -abs(params.alpha)
        return magnitude / (1.0 - params.discount)
    return (
        1.0
        - params.tracking_weight * tracking_error**2
        - params.velocity_weight * vel_sq
        - params.posture_weight * posture_sq
        - params.action_weight * action_sq
    )


@dataclass
class TrackerSim:
    """Point mass with PD tracking through a delayed observation channel.

    ``controller_gain`` is the proportional gain; damping is critical.
    """

    grid: KnotGrid
    controller_gain: float = 400.0
    e_max: float = 0.1
    episode_len: int = 1500
    rate_hz: float = 125.0
    omega: float = 0.0
    drop_prob: float = 0.25
    delay_pmf: tuple = DELAY_PMF
    reward_params: RewardParams = RewardParams()
    seed: int = 0

    def rollout(self, context: Context, controller_gain: float | None = None) -> RolloutRecord:
        gain = self.controller_gain if controller_gain is None else controller_gain
        kp, kd = gain, 2.0 * np.sqrt(gain)
        dt = 1.0 / self.rate_hz
        lo, _ = self.grid.horizon
        times = lo + dt * np.arange(self.episode_len)
        times = np.minimum(times, self.grid.horizon[1])
        ref = rollout(context, self.grid, times)  # (T, 3, 3)
        ref_pos, ref_vel = ref[:, :, 0], ref[:, :, 1]

        rng = np.random.default_rng(self.seed)
        queue = DelayQueue(rng, self.delay_pmf, self.drop_prob)
        filt = ActionFilter(np.full(3, self.omega))
        pos = context.start.copy()
        vel = np.zeros(3)
        obs_pos, obs_vel = pos.copy(), vel.copy()
        params = self.reward_params
        ret, disc, steps = 0.0, 1.0, 0
        for k in range(self.episode_len):
            queue.push((pos.copy(), vel.copy()))
            delivered = queue.tick()
            if delivered:
                obs_pos, obs_vel = delivered[-1]
            command = kp * (ref_pos[k] - obs_pos) + kd * (ref_vel[k] - obs_vel)
            acc = filt(command)
            vel = vel + dt * acc
            pos = pos + dt * vel
            error = float(np.linalg.norm(ref_pos[k] - pos))
            tipped = error >= self.e_max
            r = reward(error, float(vel @ vel), float((pos - context.start) @ (pos - context.start)),
                       float(acc @ acc), tipped, params)
            ret += disc * r
            disc *= params.discount
            if tipped:
                break
            steps += 1
        return RolloutRecord(context.coords, float(steps), ret, steps)


def tracker_rollout(sim: TrackerSim, context: Context, controller_gain: float | None = None) -> RolloutRecord:
    return sim.rollout(context, controller_gain)
