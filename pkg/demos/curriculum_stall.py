"""
Convergence and stall on the surrogate learner
==============================================

Run the Mahalanobis cone variant and the Euclidean half-ball variant side by
side and print normalized Wasserstein distances to the target distribution.
"""

import numpy as np

from trackcurriculum.harness import ExperimentConfig, run_experiment

budget = dict(n_particles=64, candidates_per_particle=64, iterations=100)

logs = {v: run_experiment(ExperimentConfig(variant=v, **budget), write=False) for v in ("currot_ao", "currot")}

print("iteration   currot_ao   currot")
for k in (1, 5, 10, 20, 30, 50, 75, 100):
    row = [logs[v].column("wasserstein")[k - 1] for v in ("currot_ao", "currot")]
    print(f"{k:9d}   {row[0]:9.4f}   {row[1]:6.4f}")

line = logs["currot"].epsilon_line
print("trust-region line eps / W2(p0, mu):", round(line, 4))
print("currot moved fraction, last 10 iterations:", np.mean(logs["currot"].column("moved_fraction")[-10:]))
