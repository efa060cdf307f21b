"""Brute-force reference computations, independent of the fast code paths.

Used by the ``check`` subcommand and by the test suite.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .assignment import auction_assign
from .envs.tracking import DELAY_PMF, DelayQueue
from .trajectory import KernelBasis, KnotGrid, eight_grid, kernel_basis, psi_matrix, psi_segment, transition_matrix

__all__ = [
    "GENERATOR",
    "quad_psi",
    "expm_transition",
    "propagate_states",
    "state_energy",
    "enumerate_assignment",
    "delay_histogram",
    "SuiteResult",
    "SUITES",
    "run_suites",
]

# triple integrator: d/dt (p, v, a) = (v, a, u)
GENERATOR = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])


def quad_psi(t_l: float, t_h: float, t: float) -> np.ndarray:
    """Adaptive quadrature of ``exp(A (t - tau)) B`` over the active part of the segment."""
    hi = min(t_h, t)
    if t < t_l or hi <= t_l:
        return np.zeros(3)
    kw = dict(epsabs=1e-14, epsrel=1e-12, limit=200)
    return np.array([
        integrate.quad(lambda s: 0.5 * (t - s) ** 2, t_l, hi, **kw)[0],
        integrate.quad(lambda s: t - s, t_l, hi, **kw)[0],
        integrate.quad(lambda s: 1.0, t_l, hi, **kw)[0],
    ])


def expm_transition(dt: float) -> np.ndarray:
    return linalg.expm(GENERATOR * dt)


def _step(x, u, h):
    """Exact propagation of one axis state over ``h`` seconds of constant jerk ``u``."""
    return np.array([
        x[0] + h * x[1] + h * h * x[2] / 2 + u * h**3 / 6,
        x[1] + h * x[2] + u * h * h / 2,
        x[2] + u * h,
    ])


def propagate_states(jerk: np.ndarray, grid: KnotGrid, times, start=0.0) -> np.ndarray:
    """States of one axis at ``times`` by segment-wise propagation: shape (T, 3)."""
    knots = grid.array
    x = np.array([float(start), 0.0, 0.0])
    at_knot = [x]
    for k in range(grid.K):
        x = _step(x, jerk[k], knots[k + 1] - knots[k])
        at_knot.append(x)
    out = []
    for t in np.atleast_1d(times):
        if t <= knots[0]:
            out.append(at_knot[0])
        elif t >= knots[-1]:
            out.append(at_knot[-1])
        else:
            k = int(np.searchsorted(knots, t, side="right") - 1)
            out.append(_step(at_knot[k], jerk[k], t - knots[k]))
    return np.array(out)


def state_energy(j1: np.ndarray, j2: np.ndarray, grid: KnotGrid, times, rows: str = "full") -> float:
    """Sum over axes and times of squared state differences, by propagation."""
    total = 0.0
    for a in range(j1.shape[0]):
        d = propagate_states(j1[a] - j2[a], grid, times)
        if rows == "position":
            d = d[:, :1]
        total += float(np.sum(d * d))
    return total


def enumerate_assignment(cost) -> tuple[float, tuple[int, ...]]:
    """Minimum total cost over all permutations and the first optimal one."""
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    best, arg = np.inf, tuple(range(n))
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        c = cost[rows, perm].sum()
        if c < best:
            best, arg = c, perm
    return float(best), arg


def delay_histogram(n: int, seed: int = 0, pmf=DELAY_PMF) -> np.ndarray:
    """Empirical pmf of the delays drawn by ``n`` pushes (no drops)."""
    q = DelayQueue(np.random.default_rng(seed), pmf, drop_prob=0.0)
    counts = np.zeros(len(pmf))
    for _ in range(n):
        counts[q.push(None)] += 1
        q.tick()
    return counts / n


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    error: float
    tolerance: float


def _suite_psi(rng, **_):
    err = 0.0
    for _ in range(200):
        t_l, t_h = np.sort(rng.uniform(0, 5, 2))
        t = rng.uniform(0, 6)
        err = max(err, float(np.abs(psi_segment(t_l, t_h, t) - quad_psi(t_l, t_h, t)).max()))
    return err, 1e-9


def _suite_transition(rng, **_):
    return max(float(np.abs(transition_matrix(dt) - expm_transition(dt)).max()) for dt in rng.uniform(0, 3, 50)), 1e-12


def _suite_kernel(rng, basis: KernelBasis | None = None, **_):
    basis = basis or kernel_basis(eight_grid())
    g = basis.gamma
    residual = float(np.abs(psi_matrix(basis.grid.t_end, basis.grid) @ g).max())
    ortho = float(np.abs(g.T @ g - np.eye(g.shape[1])).max())
    return max(residual, ortho), 1e-9


def _suite_rollout(rng, basis: KernelBasis | None = None, **_):
    from .trajectory import Context, rollout

    basis = basis or kernel_basis(eight_grid())
    grid = basis.grid
    times = np.linspace(*grid.horizon, 97)
    err = 0.0
    for _ in range(10):
        u = rng.standard_normal((3, basis.dim))
        ctx = Context(u.ravel(), rng.standard_normal(3))
        fast = rollout(ctx, grid, times)
        j = u @ basis.gamma.T
        for a in range(3):
            err = max(err, float(np.abs(fast[:, a] - propagate_states(j[a], grid, times, ctx.start[a])).max()))
    return err, 1e-8


def _suite_metric(rng, basis: KernelBasis | None = None, **_):
    from .metric import MetricBuildSpec, build_state_metric, default_eval_times, distance

    basis = basis or kernel_basis(eight_grid())
    grid = basis.grid
    metric = build_state_metric(MetricBuildSpec(grid), basis)
    times = default_eval_times(grid)
    err = 0.0
    for _ in range(10):
        c1, c2 = rng.standard_normal((2, 3 * basis.dim))
        d2 = distance(metric, c1, c2) ** 2
        j1 = c1.reshape(3, -1) @ basis.gamma.T
        j2 = c2.reshape(3, -1) @ basis.gamma.T
        ref = state_energy(j1, j2, grid, times)
        err = max(err, abs(d2 - ref) / ref)
    return err, 1e-8


def _suite_auction(rng, **_):
    worst = 0.0
    for n in range(1, 8):
        for _ in range(5):
            cost = rng.uniform(0, 10, (n, n))
            best, _perm = enumerate_assignment(cost)
            worst = max(worst, auction_assign(cost).total_cost - best)
    return worst, 1e-6


def _suite_delay(rng, **_):
    emp = delay_histogram(200_000, seed=int(rng.integers(1 << 31)))
    return float(np.abs(emp - np.asarray(DELAY_PMF)).max()), 0.004


SUITES = {
    "psi_quadrature": _suite_psi,
    "transition_expm": _suite_transition,
    "kernel_residual": _suite_kernel,
    "rollout_propagation": _suite_rollout,
    "metric_energy": _suite_metric,
    "auction_enumeration": _suite_auction,
    "delay_pmf": _suite_delay,
}


def run_suites(seed: int = 0, basis: KernelBasis | None = None, names=None) -> list[SuiteResult]:
    """Run the registered suites; ``basis`` overrides the kernel basis (fault injection)."""
    out = []
    for name in names or SUITES:
        rng = np.random.default_rng(seed)
        err, tol = SUITES[name](rng, basis=basis)
        out.append(SuiteResult(name, bool(err <= tol), float(err), tol))
    return out
