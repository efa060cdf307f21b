"""Acceptance criteria, one test each; every test reports a pass/fail line."""

import itertools
import time

import numpy as np

from trackcurriculum.assignment import AuctionConfig, auction_assign
from trackcurriculum.cli import main
from trackcurriculum.competence import PerformanceBuffer
from trackcurriculum.curriculum import CurriculumState, CurrotConfig, Phase, cone_sample, curriculum_step, half_ball_sample
from trackcurriculum.envs.surrogate import SurrogateLearner
from trackcurriculum.envs.tracking import DELAY_PMF, DelayQueue, reward
from trackcurriculum.harness import ExperimentConfig, build_setup, run_experiment
from trackcurriculum.metric import MetricBuildSpec, build_state_metric, default_eval_times, distance
from trackcurriculum.oracles import enumerate_assignment, expm_transition, propagate_states, quad_psi
from trackcurriculum.trajectory import Context, eight_grid, kernel_basis, psi_segment, rollout, transition_matrix

GRID = eight_grid()
BASIS = kernel_basis(GRID)


def test_1_closed_form_rollout(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    times = np.linspace(*GRID.horizon, 41)
    worst = end = 0.0
    for _ in range(1000):
        u = rng.standard_normal((3, BASIS.dim))
        start = rng.standard_normal(3)
        ctx = Context(u.ravel(), start)
        states = rollout(ctx, GRID, np.append(times, GRID.t_end))
        jerk = u @ BASIS.gamma.T
        for a in range(3):
            ref = propagate_states(jerk[a], GRID, times, start[a])
            worst = max(worst, float(np.abs(states[:-1, a] - ref).max()))
        # closure: back at the start, at rest
        final = states[-1]
        end = max(end, float(np.abs(final[:, 0] - start).max()), float(np.abs(final[:, 1:]).max()))
    elapsed = time.perf_counter() - t0
    acceptance(1, worst < 1e-8 and end < 1e-8 and elapsed < 10,
               f"D={3 * BASIS.dim}, max oracle error {worst:.2e}, endpoint error {end:.2e}, {elapsed:.1f} s")


def test_2_segment_formulas(acceptance):
    rng = np.random.default_rng(2)
    worst_psi = worst_phi = 0.0
    for _ in range(10_000):
        t_l, t_h = np.sort(rng.uniform(0, 12, 2))
        t = rng.uniform(0, 12)
        worst_psi = max(worst_psi, float(np.abs(psi_segment(t_l, t_h, t) - quad_psi(t_l, t_h, t)).max()))
        dt = t - t_l
        worst_phi = max(worst_phi, float(np.abs(transition_matrix(dt) - expm_transition(dt)).max()))
    acceptance(2, worst_psi < 1e-9 and worst_phi < 1e-9,
               f"psi vs quadrature {worst_psi:.2e}, transition vs expm {worst_phi:.2e} over 1e4 triples")


def test_3_metric_equivalence(acceptance):
    rng = np.random.default_rng(3)
    spec = MetricBuildSpec(GRID)
    metric = build_state_metric(spec, BASIS)
    times = default_eval_times(GRID)
    worst = 0.0
    for _ in range(50):
        c1, c2 = rng.standard_normal((2, 3 * BASIS.dim))
        start = rng.standard_normal(3)
        x1 = rollout(Context(c1, start), GRID, times)
        x2 = rollout(Context(c2, start), GRID, times)
        energy = float(np.sum((x1 - x2) ** 2))
        worst = max(worst, abs(distance(metric, c1, c2) ** 2 - energy) / energy)
    A = metric.matrix
    W = metric.whitening
    residual = float(np.abs(W.T @ W - A).max() / np.abs(A).max())
    acceptance(3, worst < 1e-8 and residual < 1e-9,
               f"max relative energy error {worst:.2e}, whitening residual {residual:.2e}")


def test_4_assignment(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    gap_ok = perm_ok = True
    unique = 0
    for i in range(100):
        n = 1 + i % 8
        cost = rng.uniform(0, 10, (n, n))
        cfg = AuctionConfig.for_costs(cost)
        a = auction_assign(cost, cfg)
        best, perm = enumerate_assignment(cost)
        gap_ok &= a.total_cost <= best + n * cfg.eps_min
        totals = sorted(cost[np.arange(n), list(p)].sum() for p in itertools.permutations(range(n)))
        if n == 1 or totals[1] > totals[0]:
            unique += 1
            perm_ok &= a.phi.tolist() == list(perm)
    elapsed = time.perf_counter() - t0
    acceptance(4, gap_ok and perm_ok and elapsed < 30,
               f"100 instances N<=8, cost gap ok={gap_ok}, {unique} unique optima matched={perm_ok}, {elapsed:.1f} s")


def test_5_sampling_geometry(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    eps = 1.0
    center = np.zeros(51)
    d = rng.standard_normal(51)
    target = 0.5 * eps * d / np.linalg.norm(d)
    X = half_ball_sample(center, target, eps, rng, size=100_000)
    half = float(np.mean(np.linalg.norm(X - target, axis=1) < 0.5 * eps))
    X = cone_sample(center, target, eps, 0.25 * np.pi, rng, size=100_000)
    cone = float(np.mean(np.linalg.norm(X - target, axis=1) < 0.5 * eps))
    elapsed = time.perf_counter() - t0
    acceptance(5, half < 0.01 and cone > 0.5 and elapsed < 10,
               f"decreasing draws: half-ball {half:.4f}, cone {cone:.4f}, {elapsed:.1f} s")


# fixed desk budget: 64 particles, 64 candidates each
CONVERGENCE = dict(n_particles=64, candidates_per_particle=64, iterations=200)


def test_6_convergence_vs_stall(acceptance):
    t0 = time.perf_counter()
    ao_final, ao_hit, cur_final, lines = [], [], [], []
    for seed in range(10):
        ao = run_experiment(ExperimentConfig(variant="currot_ao", **CONVERGENCE), seed=seed, write=False)
        cur = run_experiment(ExperimentConfig(variant="currot", **CONVERGENCE), seed=seed, write=False)
        ao_final.append(ao.final_wasserstein)
        ao_hit.append(float(np.nanmin(ao.column("wasserstein"))) < 0.05)
        cur_final.append(cur.final_wasserstein)
        lines.append(cur.epsilon_line)
    elapsed = time.perf_counter() - t0
    converged = all(ao_hit)
    ratio = np.array(cur_final) / np.array(lines)
    stalled = bool(np.all(ratio >= 0.5))
    acceptance(6, converged and stalled and elapsed < 600,
               f"currot_ao median final W2 {np.median(ao_final):.4f} (all < 0.05: {converged}); "
               f"currot median final W2 {np.median(cur_final):.4f} vs median eps line {np.median(lines):.4f} "
               f"(min ratio {ratio.min():.2f}); {elapsed:.0f} s")


def test_7_snap_to_target(acceptance):
    rng = np.random.default_rng(7)
    setup = build_setup(ExperimentConfig())
    metric = setup.metric
    P = setup.draw_mu(rng, 64)
    eps = 1.0
    steps = rng.standard_normal(P.shape)
    white = metric.whiten(steps)
    # scale each step to whitened length 0.9 eps
    T = P + steps * (0.9 * eps / np.linalg.norm(white, axis=1))[:, None]
    T = T[rng.permutation(64)]
    learner = SurrogateLearner(P[:1], np.inf, np.inf, metric)
    cfg = CurrotConfig(epsilon=eps, delta=1400.0, metric=metric, sampler="cone", seed=7)
    state = CurriculumState(Phase.ACTIVE, P, 0)
    new, stats = curriculum_step(state, PerformanceBuffer(128, 128, 1400.0), learner.rollouts(P), cfg, None, targets=T)
    acceptance(7, stats.wasserstein == 0.0, f"W2 against drawn targets after one step: {stats.wasserstein!r}")


def test_8_delay_model(acceptance):
    q = DelayQueue(np.random.default_rng(8), drop_prob=0.0)
    drawn = np.fromiter((q.push(None) for _ in range(1_000_000)), dtype=int, count=1_000_000)
    freq = np.bincount(drawn, minlength=5) / drawn.size
    pmf_err = float(np.abs(freq - DELAY_PMF).max())

    rng = np.random.default_rng(9)
    q = DelayQueue(np.random.default_rng(10), drop_prob=0.25)
    last, pushed, fifo = -1, 0, True
    for op in rng.random(1_000_000) < 0.5:
        if op:
            q.push(pushed)
            pushed += 1
        else:
            for p in q.tick():
                fifo &= p > last
                last = p
    acceptance(8, pmf_err <= 0.002 and fifo,
               f"pmf {np.round(freq, 4).tolist()} max deviation {pmf_err:.4f}; FIFO kept over 1e6 ops: {fifo}")


def test_9_reward(acceptance):
    r = reward(0.03, 0.0, 0.0, 0.0, False)
    tipped = reward(0.0, 0.0, 0.0, 0.0, True)
    # 1 - 0.9 evaluated in binary floating point is the double nearest 0.1 that the formula can return
    acceptance(9, r == 1.0 - 0.9 and abs(r - 0.1) <= 4 * np.spacing(0.1) and abs(tipped + 1000.0) <= 1e-9,
               f"error 0.03 m -> {r!r} (1 - 0.9 = {1.0 - 0.9!r}); tipped -> {tipped!r}")


def test_10_determinism(acceptance, tmp_path):
    args = ["run", "--seed", "7", "--n-particles", "64", "--iterations", "30"]
    codes = [main(args + ["--out-dir", str(tmp_path / name)]) for name in ("a", "b")]
    a, b = (tmp_path / "a" / "run.csv").read_bytes(), (tmp_path / "b" / "run.csv").read_bytes()
    acceptance(10, codes == [0, 0] and a == b, f"exit codes {codes}, run.csv identical: {a == b} ({len(a)} bytes)")
