"""
Eights as kernel coordinates
============================

Fit an eight-shaped target trajectory with a closed jerk sequence and look
at how far apart two eights are in the trajectory metric.
"""

import numpy as np

from trackcurriculum import (
    MetricBuildSpec,
    build_state_metric,
    distance,
    euclidean,
    kernel_basis,
    eight_grid,
)
from trackcurriculum.envs.eight import EightTargetSpec, fit_error, low_dim_to_context

# twenty jerk segments on [1, 11] s; three closure constraints per axis leave 17 free coordinates
grid = eight_grid()
basis = kernel_basis(grid)
spec = EightTargetSpec(grid=grid)
print("context dimension:", 3 * basis.dim)

# the smallest and largest eights of the target family
small = low_dim_to_context(0.36, 0.18, spec)
large = low_dim_to_context(0.40, 0.20, spec)
print("fit error of the large eight [m]:", fit_error(large, 0.40, 0.20, spec))

# the metric integrates squared state differences along the whole rollout
metric = build_state_metric(MetricBuildSpec(grid), basis)
print("condition number of A:", metric.condition_number)
print("trajectory distance:", distance(metric, small.coords, large.coords))
print("euclidean distance: ", distance(euclidean(51), small.coords, large.coords))

# unit euclidean steps have very different trajectory lengths depending on direction
rng = np.random.default_rng(0)
steps = rng.standard_normal((1000, 51))
steps /= np.linalg.norm(steps, axis=1, keepdims=True)
lengths = np.linalg.norm(metric.whiten(steps), axis=1)
print("trajectory length of unit steps, 5/50/95 %:", np.percentile(lengths, [5, 50, 95]))
