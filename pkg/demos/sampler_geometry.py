"""
Half-ball versus cone proposals in high dimension
=================================================

With the target inside the trust region, how many proposals actually get
closer to it?
"""

import numpy as np

from trackcurriculum import cone_sample, half_ball_sample

rng = np.random.default_rng(0)
eps = 1.0

for n in (2, 5, 17, 51, 136):
    d = rng.standard_normal(n)
    target = 0.5 * eps * d / np.linalg.norm(d)
    center = np.zeros(n)
    X = half_ball_sample(center, target, eps, rng, size=20_000)
    Y = cone_sample(center, target, eps, np.pi / 4, rng, size=20_000)
    closer_half = np.mean(np.linalg.norm(X - target, axis=1) < 0.5 * eps)
    closer_cone = np.mean(np.linalg.norm(Y - target, axis=1) < 0.5 * eps)
    print(f"n={n:4d}  half-ball {closer_half:6.3f}   cone {closer_cone:6.3f}")

# in high dimension the half-ball mass sits on its rim, orthogonal to the target direction
n = 51
X = half_ball_sample(np.zeros(n), np.eye(n)[0], eps, rng, size=20_000)
cos = X[:, 0] / np.linalg.norm(X, axis=1)
print("median cosine to target direction in the half-ball:", np.median(cos))
