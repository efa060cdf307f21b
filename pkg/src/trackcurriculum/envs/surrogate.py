"""Deterministic stand-in for a learning agent.

Competence is a union of balls around mastered contexts.  Training only
adds contexts that are already close to the mastered set, so mastery spreads
locally and distant tasks stay out of reach without a curriculum.
"""

from __future__ import annotations

import numpy as np

from ..competence import RolloutRecord
from ..metric import MetricSpec, sq_euclidean_fast

__all__ = ["SurrogateLearner", "surrogate_rollout", "surrogate_train"]


class SurrogateLearner:
    def __init__(self, mastered_centers, rho_learn: float, rho_fail: float, metric: MetricSpec, T_max: int = 1500):
        if not 0 < rho_learn <= rho_fail:
            raise ValueError("need 0 < rho_learn <= rho_fail")
        centers = np.atleast_2d(np.asarray(mastered_centers, dtype=float))
        if centers.shape[0] == 0:
            raise ValueError("need at least one mastered center")
        self.rho_learn = float(rho_learn)
        self.rho_fail = float(rho_fail)
        self.metric = metric
        self.T_max = int(T_max)
        self._centers = [centers]
        self._white = [metric.whiten(centers)]

    def _consolidate(self):
        if len(self._centers) > 1:
            self._centers = [np.vstack(self._centers)]
            self._white = [np.vstack(self._white)]

    @property
    def mastered_centers(self) -> np.ndarray:
        self._consolidate()
        return self._centers[0]

    def _white_centers(self) -> np.ndarray:
        self._consolidate()
        return self._white[0]

    def distance_to_mastered(self, contexts) -> np.ndarray:
        Z = self.metric.whiten(np.atleast_2d(contexts))
        return np.sqrt(sq_euclidean_fast(Z, self._white_centers()).min(axis=1))

    def metric_value(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        frac = 1.0 - (d - self.rho_learn) / max(self.rho_fail - self.rho_learn, 1e-300)
        return np.where(d <= self.rho_learn, float(self.T_max), self.T_max * np.clip(frac, 0.0, 1.0))

    def rollouts(self, contexts) -> list[RolloutRecord]:
        contexts = np.atleast_2d(contexts)
        values = self.metric_value(self.distance_to_mastered(contexts))
        records = []
        for c, m in zip(contexts, values):
            steps = int(round(float(m)))
            records.append(RolloutRecord(c, float(m), float(steps), steps))
        return records

    def train(self, contexts) -> int:
        """Master every context within ``rho_learn`` of the current set, in order.

        Returns the number of new centers.  Exact duplicates are skipped.
        """
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        if contexts.size == 0:
            return 0
        Z = self.metric.whiten(contexts)
        d_old = np.sqrt(sq_euclidean_fast(Z, self._white_centers()).min(axis=1))
        added: list[int] = []
        for i in range(contexts.shape[0]):
            d = d_old[i]
            if added:
                d = min(d, float(np.linalg.norm(Z[added] - Z[i], axis=1).min()))
            if 0.0 < d <= self.rho_learn:
                added.append(i)
        if added:
            self._centers.append(contexts[added].copy())
            self._white.append(Z[added])
        return len(added)


def surrogate_rollout(learner: SurrogateLearner, context) -> RolloutRecord:
    return learner.rollouts(np.asarray(context)[None, :])[0]


def surrogate_train(learner: SurrogateLearner, contexts) -> int:
    return learner.train(contexts)
