"""Desk-scale evaluation targets for the curriculum."""

from .eight import EightTargetSpec, eight_trajectory, low_dim_to_context, low_dim_to_coords, mu_sampler
from .surrogate import SurrogateLearner, surrogate_rollout, surrogate_train
from .tracking import (
    DELAY_PMF,
    ActionFilter,
    DelayQueue,
    RewardParams,
    TrackerSim,
    delay_push,
    delay_tick,
    filter_action,
    reward,
    tracker_rollout,
)

__all__ = [
    "EightTargetSpec",
    "eight_trajectory",
    "low_dim_to_context",
    "low_dim_to_coords",
    "mu_sampler",
    "SurrogateLearner",
    "surrogate_rollout",
    "surrogate_train",
    "DELAY_PMF",
    "ActionFilter",
    "DelayQueue",
    "RewardParams",
    "TrackerSim",
    "delay_push",
    "delay_tick",
    "filter_action",
    "reward",
    "tracker_rollout",
]
