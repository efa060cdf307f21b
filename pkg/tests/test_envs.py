import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trackcurriculum.envs.eight import (
    FIT_TOLERANCE,
    EightTargetSpec,
    eight_trajectory,
    fit_error,
    low_dim_to_context,
    low_dim_to_coords,
    mu_sampler,
)
from trackcurriculum.envs.surrogate import SurrogateLearner, surrogate_rollout, surrogate_train
from trackcurriculum.envs.tracking import (
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
from trackcurriculum.metric import euclidean
from trackcurriculum.trajectory import Context, rollout

SPEC = EightTargetSpec()


# eight


def test_padding_is_start_position():
    t = np.concatenate([np.linspace(0, SPEC.t_move[0], 5), np.linspace(SPEC.t_move[1], SPEC.period, 5)])
    np.testing.assert_allclose(eight_trajectory(0.38, 0.19, SPEC, t), np.tile(SPEC.start, (10, 1)), atol=1e-15)


def test_half_phase_is_top_of_sphere():
    t0, t1 = SPEC.t_move
    p = eight_trajectory(0.4, 0.2, SPEC, 0.5 * (t0 + t1))
    np.testing.assert_allclose(p, SPEC.start, atol=1e-15)


@settings(max_examples=50)
@given(st.floats(0, 0.4), st.floats(0, 0.2))
def test_on_sphere(ax, ay):
    p = eight_trajectory(ax, ay, SPEC, np.linspace(0, SPEC.period, 997))
    r = np.linalg.norm(p - np.asarray(SPEC.sphere_center), axis=1)
    assert np.abs(r - SPEC.sphere_radius).max() < 1e-10


def test_eight_shape_and_range_errors():
    t0, t1 = SPEC.t_move
    s = SPEC.phase(np.linspace(t0, t1, 2001))
    assert s[0] == 0.0 and s[-1] == 1.0 and np.all(np.diff(s) >= 0)
    with pytest.raises(ValueError):
        eight_trajectory(0.5, 0.1, SPEC, 1.0)
    with pytest.raises(ValueError):
        eight_trajectory(0.3, 0.1, SPEC, SPEC.period + 1)
    with pytest.raises(ValueError):
        EightTargetSpec(amp_x_range=(0.4, 0.3))


def test_zero_amplitudes_give_zero_context():
    c = low_dim_to_context(0.0, 0.0, SPEC)
    assert np.abs(c.coords).max() < 1e-12
    assert c.coords.shape == (51,)


def test_fit_center_of_ranges():
    c = low_dim_to_context(0.38, 0.19, SPEC)
    assert fit_error(c, 0.38, 0.19, SPEC) < FIT_TOLERANCE


def test_fit_corner_of_ranges():
    c = low_dim_to_context(0.4, 0.2, SPEC)
    assert fit_error(c, 0.4, 0.2, SPEC) < FIT_TOLERANCE


def test_fit_deterministic_and_batched():
    a = low_dim_to_context(0.37, 0.185, SPEC).coords
    b = low_dim_to_context(0.37, 0.185, SPEC).coords
    assert np.array_equal(a, b)
    batch = low_dim_to_coords([[0.37, 0.185], [0.0, 0.0]], SPEC)
    np.testing.assert_allclose(batch[0], a, rtol=1e-12, atol=1e-15)
    with pytest.raises(ValueError):
        low_dim_to_coords([[0.5, 0.1]], SPEC)


def test_fit_linear_in_small_amplitudes():
    # planar axes are linear in the amplitudes, the sphere lift (z axis) is quadratic
    a = low_dim_to_coords([[2e-4, 1e-4]], SPEC)[0].reshape(3, -1)
    b = low_dim_to_coords([[1e-4, 5e-5]], SPEC)[0].reshape(3, -1)
    np.testing.assert_allclose(a[:2], 2 * b[:2], rtol=1e-12, atol=1e-18)
    np.testing.assert_allclose(a[2], 4 * b[2], rtol=1e-6, atol=1e-18)


def test_mu_sampler_pinned():
    amps = mu_sampler(SPEC, np.random.default_rng(2024), 3, high_dim=False)
    np.testing.assert_allclose(
        amps,
        [[0.38703325, 0.19598932], [0.36857293, 0.19991604], [0.37237808, 0.18284464]],
        rtol=0,
        atol=5e-9,
    )
    coords = mu_sampler(SPEC, np.random.default_rng(2024), 3)
    np.testing.assert_allclose(coords, low_dim_to_coords(amps, SPEC), rtol=1e-12)
    np.testing.assert_allclose(
        coords[:, :3],
        [[0.63011505, 0.13502446, 0.0772323], [0.60006046, 0.1285842, 0.07354855], [0.60625549, 0.1299117, 0.07430787]],
        rtol=0,
        atol=5e-8,
    )


def test_mu_sampler_ranges_and_mean():
    amps = mu_sampler(SPEC, np.random.default_rng(0), 100_000, high_dim=False)
    assert amps[:, 0].min() >= 0.36 and amps[:, 0].max() <= 0.40
    assert amps[:, 1].min() >= 0.18 and amps[:, 1].max() <= 0.20
    assert amps[:, 0].mean() == pytest.approx(0.38, abs=2e-4)
    assert mu_sampler(SPEC, np.random.default_rng(0), high_dim=False).shape == (2,)


def test_position_constraints_contain_family():
    box = SPEC.position_constraints().position_set
    for ax, ay in [(0.4, 0.2), (0.36, 0.18), (0.0, 0.0)]:
        p = eight_trajectory(ax, ay, SPEC, np.linspace(0, SPEC.period, 500))
        assert np.all(box.distance(p) == 0.0)


# surrogate


def learner(rho_learn=1.0, rho_fail=3.0, dim=2):
    return SurrogateLearner(np.zeros((1, dim)), rho_learn, rho_fail, euclidean(dim))


def test_surrogate_examples():
    ln = learner()
    assert surrogate_rollout(ln, np.zeros(2)).metric_value == 1500
    assert surrogate_rollout(ln, np.array([3.5, 0.0])).metric_value == 0
    mid = surrogate_rollout(ln, np.array([2.0, 0.0]))
    assert mid.metric_value == 750 and mid.steps == 750


def test_surrogate_validation():
    with pytest.raises(ValueError):
        learner(2.0, 1.0)
    with pytest.raises(ValueError):
        SurrogateLearner(np.zeros((0, 2)), 1.0, 2.0, euclidean(2))


def test_train_far_context_is_ignored():
    ln = learner()
    assert surrogate_train(ln, [[2.0, 0.0]]) == 0
    assert ln.mastered_centers.shape == (1, 2)


def test_train_along_chain():
    ln = learner()
    chain = np.column_stack([np.arange(1, 21) * 0.5, np.zeros(20)])
    assert surrogate_train(ln, chain) == 20
    assert surrogate_rollout(ln, np.array([10.0, 0.0])).metric_value == 1500
    # reversed order: only the two links within reach of the origin are learned
    ln2 = learner()
    assert surrogate_train(ln2, chain[::-1]) == 2


def test_train_idempotent():
    ln = learner()
    surrogate_train(ln, [[0.5, 0.0]])
    before = ln.mastered_centers.copy()
    assert surrogate_train(ln, [[0.5, 0.0], [0.0, 0.0]]) == 0
    np.testing.assert_array_equal(ln.mastered_centers, before)


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_mastery_monotone(seed):
    rng = np.random.default_rng(seed)
    ln = learner(0.5, 1.0)
    probes = 3 * rng.standard_normal((50, 2))
    prev = np.array([r.metric_value for r in ln.rollouts(probes)])
    for _ in range(5):
        ln.train(rng.standard_normal((10, 2)))
        cur = np.array([r.metric_value for r in ln.rollouts(probes)])
        assert np.all(cur >= prev)
        prev = cur


# delay queue


def test_delay_pmf_values():
    assert DELAY_PMF == (0.905, 0.035, 0.02, 0.02, 0.02)
    with pytest.raises(ValueError):
        DelayQueue(np.random.default_rng(0), delay_pmf=(0.5, 0.4))


def test_zero_delay_passthrough():
    q = DelayQueue(np.random.default_rng(0), delay_pmf=(1.0,), drop_prob=0.0)
    for i in range(100):
        assert delay_push(q, i) == 0
        assert delay_tick(q) == [i]


def test_drop_all():
    q = DelayQueue(np.random.default_rng(0), drop_prob=1.0)
    for i in range(50):
        q.push(i)
        assert q.tick() == []
    assert len(q) == 0


def test_fifo_under_random_operations():
    rng = np.random.default_rng(1)
    q = DelayQueue(np.random.default_rng(2), drop_prob=0.25)
    pushed, delivered = 0, []
    for op in rng.random(100_000):
        if op < 0.6:
            q.push(pushed)
            pushed += 1
        else:
            delivered.extend(q.tick())
    assert delivered == sorted(delivered)
    assert len(set(delivered)) == len(delivered)


def fifo_run(n, seed=0):
    q = DelayQueue(np.random.default_rng(seed), drop_prob=0.0)
    drawn = np.empty(n, dtype=int)
    enforced = np.empty(n, dtype=int)
    for i in range(n):
        drawn[i] = q.push(i)
        for p in q.tick():
            enforced[p] = q.now - 1 - p
    while len(q):
        for p in q.tick():
            enforced[p] = q.now - 1 - p
    return drawn, enforced


def test_fifo_corrected_delay_distribution_pinned():
    drawn, enforced = fifo_run(200_000)
    assert np.all(enforced >= drawn)
    freq = np.bincount(enforced, minlength=5) / enforced.size
    # back-pressure shifts mass from short delays to longer ones; 10^6 reference run:
    # (0.799156, 0.084494, 0.05671, 0.039379, 0.020261)
    np.testing.assert_allclose(freq, [0.799156, 0.084494, 0.05671, 0.039379, 0.020261], atol=0.004)


# filter


def test_filter_half():
    f = ActionFilter(0.5)
    out = [float(filter_action(f, 1.0)[0]) for _ in range(3)]
    assert out == [0.5, 0.75, 0.875]


def test_filter_limits():
    f0 = ActionFilter(np.zeros(3))
    np.testing.assert_array_equal(f0(np.array([1.0, -2.0, 3.0])), [1.0, -2.0, 3.0])
    f1 = ActionFilter(np.ones(2), initial=np.array([4.0, 5.0]))
    for _ in range(10):
        np.testing.assert_array_equal(f1(np.array([100.0, -100.0])), [4.0, 5.0])
    with pytest.raises(ValueError):
        ActionFilter(1.5)
    with pytest.raises(ValueError):
        ActionFilter(np.full(3, 0.5))(np.ones(2))


# reward


def test_reward_tracking_penalty():
    r = reward(0.03, 0.0, 0.0, 0.0, False)
    # 1 - 1000 * 0.03**2 rounds to the double just below 0.1
    assert abs(r - 0.1) <= 4 * math.ulp(0.1)
    assert reward(0.0, 0.0, 0.0, 0.0, False) == 1.0


def test_reward_tipped():
    assert reward(0.0, 0.0, 0.0, 0.0, True) == pytest.approx(-1000.0, rel=1e-12)
    raw = RewardParams(raw_tip_sign=True)
    assert reward(0.0, 0.0, 0.0, 0.0, True, raw) == pytest.approx(1000.0, rel=1e-12)
    with pytest.raises(ValueError):
        RewardParams(discount=1.0)


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1), min_size=4, max_size=4), st.integers(0, 3), st.floats(1e-3, 1))
def test_reward_decreasing(args, which, bump):
    bumped = list(args)
    bumped[which] += bump
    assert reward(*bumped, False) < reward(*args, False)


# tracker


def test_tracker_zero_context_survives():
    sim = TrackerSim(SPEC.grid, seed=3)
    r = tracker_rollout(sim, Context(np.zeros(51), SPEC.start))
    assert r.steps == 1500 and r.metric_value == 1500


def test_tracker_zero_gain_fails_at_departure():
    sim = TrackerSim(SPEC.grid, seed=3)
    ctx = low_dim_to_context(0.38, 0.19, SPEC)
    r = tracker_rollout(sim, ctx, controller_gain=0.0)
    t = SPEC.grid.horizon[0] + np.arange(1500) / sim.rate_hz
    ref = rollout(ctx, SPEC.grid, np.minimum(t, SPEC.grid.horizon[1]))[:, :, 0]
    departed = np.linalg.norm(ref - SPEC.start, axis=1) >= sim.e_max
    assert r.steps == int(np.argmax(departed)) < 1500


def test_tracker_pinned():
    sim = TrackerSim(SPEC.grid, seed=3)
    r = sim.rollout(low_dim_to_context(0.38, 0.19, SPEC))
    assert r.metric_value == 1500.0
    assert r.episode_return == pytest.approx(124.47701825796479, rel=1e-9)
    again = sim.rollout(low_dim_to_context(0.38, 0.19, SPEC))
    assert again.episode_return == r.episode_return
