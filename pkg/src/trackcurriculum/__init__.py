"""Curriculum learning over jerk-parameterized trajectories.

Trajectories of triple integrators live in the null space of their closing
constraint; a particle curriculum moves through that space under an
optimal-transport objective, with Mahalanobis geometry and cone sampling to
keep it effective in high dimension.
"""

from .assignment import Assignment, AuctionConfig, AuctionError, auction_assign, exact_assign, wasserstein2
from .competence import PerformanceBuffer, Regressor, RolloutRecord, predict, update_buffer
from .curriculum import (
    CurriculumState,
    CurrotConfig,
    Phase,
    cone_sample,
    curriculum_step,
    epsilon_default,
    half_ball_sample,
    update_particle,
    update_particles,
    warmup_check,
)
from .metric import MetricBuildSpec, MetricSpec, build_state_metric, distance, euclidean, mahalanobis
from .trajectory import (
    Context,
    KernelBasis,
    KnotGrid,
    TrajectoryConstraints,
    check_constraints,
    kernel_basis,
    eight_grid,
    psi_matrix,
    psi_segment,
    rollout,
    transition_matrix,
)

__version__ = "0.1.0"
