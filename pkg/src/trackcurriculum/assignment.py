"""Minimum-cost perfect matching between two particle sets.

The main solver is a forward auction with epsilon scaling (Jacobi bidding,
vectorized over unassigned bidders).  Persons are rows of the cost matrix,
objects are columns; the auction maximizes the benefit ``-cost``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .metric import MetricSpec, sq_euclidean

__all__ = [
    "Assignment",
    "AuctionConfig",
    "AuctionError",
    "auction_assign",
    "brute_force_assign",
    "exact_assign",
    "wasserstein2",
    "load_cost_csv",
]


@dataclass(frozen=True)
class Assignment:
    """``phi[n]`` is the column assigned to row ``n``."""

    phi: np.ndarray
    total_cost: float

    @classmethod
    def from_phi(cls, cost: np.ndarray, phi) -> "Assignment":
        phi = np.asarray(phi, dtype=np.intp)
        return cls(phi, float(cost[np.arange(phi.size), phi].sum()))

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.phi)
        inv[self.phi] = np.arange(self.phi.size)
        return inv


@dataclass(frozen=True)
class AuctionConfig:
    eps_start: float
    eps_scale: float = 0.2
    eps_min: float = 1e-9
    max_rounds: int = 1_000_000

    def __post_init__(self):
        if not self.eps_start > self.eps_min > 0:
            raise ValueError("need eps_start > eps_min > 0")
        if not 0 < self.eps_scale < 1:
            raise ValueError("eps_scale must lie in (0, 1)")

    @classmethod
    def for_costs(cls, cost: np.ndarray, eps_scale: float = 0.2, max_rounds: int = 1_000_000) -> "AuctionConfig":
        """Defaults derived from the cost matrix.

        ``eps_min`` is the smallest gap between distinct cost entries divided
        by ``N + 1`` (floored at 1e-9); ``eps_start`` is a quarter of the cost
        range.
        """
        cost = np.asarray(cost, dtype=float)
        n = cost.shape[0]
        values = np.unique(cost)
        gaps = np.diff(values)
        gap = float(gaps.min()) if gaps.size else 1.0
        eps_min = max(gap / (n + 1), 1e-9)
        spread = float(values[-1] - values[0]) if values.size else 0.0
        eps_start = max(spread / 4.0, 2.0 * eps_min)
        return cls(eps_start, eps_scale, eps_min, max_rounds)


class AuctionError(RuntimeError):
    """Raised when the round budget runs out; carries the partial matching."""

    def __init__(self, message: str, partial: np.ndarray, prices: np.ndarray):
        super().__init__(message)
        self.partial = partial
        self.prices = prices


def _validate(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    return cost


def _auction_level(benefit, prices, eps, rounds_left, check_prices):
    """Run one epsilon level to completion from scratch assignments.

    Returns (person->object, rounds used).  ``prices`` is updated in place.
    """
    n = benefit.shape[0]
    owner = np.full(n, -1, dtype=np.intp)  # object -> person
    assigned = np.full(n, -1, dtype=np.intp)  # person -> object
    rounds = 0
    while True:
        bidders = np.flatnonzero(assigned < 0)
        if bidders.size == 0:
            return assigned, rounds
        if rounds >= rounds_left:
            raise AuctionError("auction exceeded max_rounds", assigned.copy(), prices.copy())
        rounds += 1
        values = benefit[bidders] - prices[None, :]
        # argmax returns the lowest index on ties
        best = np.argmax(values, axis=1)
        rows = np.arange(bidders.size)
        v1 = values[rows, best]
        if n > 1:
            values[rows, best] = -np.inf
            v2 = values.max(axis=1)
        else:
            v2 = v1
        bids = prices[best] + (v1 - v2) + eps

        # resolve: highest bid per object wins, lowest bidder index on ties
        order = np.lexsort((bidders, -bids, best))
        first = np.ones(order.size, dtype=bool)
        first[1:] = best[order[1:]] != best[order[:-1]]
        winners = order[first]
        objs = best[winners]
        new_prices = bids[winners]
        if check_prices:
            assert np.all(new_prices >= prices[objs]), "auction price decreased"
        prices[objs] = new_prices
        previous = owner[objs]
        assigned[previous[previous >= 0]] = -1
        owner[objs] = bidders[winners]
        assigned[bidders[winners]] = objs


def auction_assign(cost, config: AuctionConfig | None = None, check_prices: bool = False) -> Assignment:
    """Epsilon-optimal assignment minimizing total cost.

    Each epsilon level runs a forward auction to completion; prices carry
    over between levels and epsilon shrinks by ``eps_scale`` until it
    reaches ``eps_min``.  The result is within ``N * eps_min`` of optimal.
    """
    cost = _validate(cost)
    n = cost.shape[0]
    if n == 0:
        return Assignment(np.zeros(0, dtype=np.intp), 0.0)
    if config is None:
        config = AuctionConfig.for_costs(cost)
    benefit = -cost
    prices = np.zeros(n)
    eps = config.eps_start
    rounds_left = config.max_rounds
    while True:
        eps = max(eps, config.eps_min)
        assigned, used = _auction_level(benefit, prices, eps, rounds_left, check_prices)
        rounds_left -= used
        if eps <= config.eps_min:
            break
        eps *= config.eps_scale
    return Assignment.from_phi(cost, assigned)


def brute_force_assign(cost) -> Assignment:
    """Exact optimum by enumerating all permutations (N <= 9)."""
    cost = _validate(cost)
    n = cost.shape[0]
    if n > 9:
        raise ValueError(f"brute force limited to N <= 9, got {n}")
    rows = np.arange(n)
    best, best_phi = math.inf, None
    for perm in itertools.permutations(range(n)):
        total = cost[rows, perm].sum()
        if total < best:
            best, best_phi = total, perm
    return Assignment.from_phi(cost, best_phi)


def exact_assign(cost) -> Assignment:
    """Exact optimum via scipy's Jonker-Volgenant solver."""
    cost = _validate(cost)
    _, cols = linear_sum_assignment(cost)
    return Assignment.from_phi(cost, cols)


_SOLVERS = {"auction": auction_assign, "exact": exact_assign, "brute": brute_force_assign}


def wasserstein2(p, mu, metric: MetricSpec, method: str = "auction", config: AuctionConfig | None = None):
    """W2 between two equal-size particle sets and the minimizing matching.

    Returns ``(value, assignment)`` with ``value = sqrt(mean squared distance)``
    under the optimal (or epsilon-optimal for the auction) matching.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    if p.shape[0] != mu.shape[0]:
        raise ValueError(f"particle counts differ: {p.shape[0]} vs {mu.shape[0]}")
    cost = sq_euclidean(metric.whiten(p), metric.whiten(mu))
    if method == "auction":
        result = auction_assign(cost, config)
    else:
        result = _SOLVERS[method](cost)
    return math.sqrt(max(result.total_cost, 0.0) / p.shape[0]), result


def load_cost_csv(path) -> np.ndarray:
    return _validate(np.loadtxt(path, delimiter=",", ndmin=2))
