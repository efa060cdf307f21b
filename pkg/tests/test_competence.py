import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trackcurriculum.competence import (
    BufferSnapshot,
    PerformanceBuffer,
    Regressor,
    RolloutRecord,
    predict,
    success_indicator,
    update_buffer,
)
from trackcurriculum.metric import euclidean, mahalanobis


def rec(c, m):
    return RolloutRecord(np.atleast_1d(np.asarray(c, dtype=float)), float(m), float(m), int(m))


def filled(contexts, values, delta=1400.0, cap=10_000):
    buf = PerformanceBuffer(cap, cap, delta)
    update_buffer(buf, [rec(c, m) for c, m in zip(contexts, values)])
    return buf


def nw_direct(query, contexts, values, h, A=None):
    """Direct evaluation of the kernel-weighted mean at 50 significant digits."""
    with mpmath.workdps(50):
        num = den = mpmath.mpf(0)
        for c, m in zip(contexts, values):
            d = np.asarray(query) - np.asarray(c)
            d2 = sum(mpmath.mpf(float(x)) ** 2 for x in d) if A is None else mpmath.mpf(float(d @ A @ d))
            w = mpmath.exp(-d2 / (2 * mpmath.mpf(h) ** 2))
            num += w * mpmath.mpf(float(m))
            den += w
        return float(num / den)


def test_record_validation():
    with pytest.raises(ValueError):
        RolloutRecord(np.zeros(2), 1.0, 1.0, -1)
    with pytest.raises(ValueError):
        RolloutRecord(np.zeros(2), np.nan, 1.0, 1)
    with pytest.raises(ValueError):
        RolloutRecord(np.array([np.inf, 0]), 1.0, 1.0, 1)


def test_record_json_round_trip():
    r = RolloutRecord(np.array([0.1, -2.0]), 1400.0, 3.5, 1400)
    back = RolloutRecord.from_json(r.to_json())
    np.testing.assert_array_equal(back.context, r.context)
    assert (back.metric_value, back.episode_return, back.steps) == (1400.0, 3.5, 1400)


@pytest.mark.parametrize("m, expected", [(1400, True), (1399, False), (1500, True)])
def test_success_indicator(m, expected):
    assert success_indicator(rec([0.0], m), 1400) is expected


def test_below_threshold_only_recent():
    buf = PerformanceBuffer(4, 4, 1400)
    update_buffer(buf, [rec([0.0], 10)])
    assert len(buf.recent_records) == 1 and len(buf.success_records) == 0


def test_recent_ring_keeps_newest():
    buf = PerformanceBuffer(3, 5, 1400)
    update_buffer(buf, [rec([float(i)], 0) for i in range(10)])
    assert [r.context[0] for r in buf.recent_records] == [5, 6, 7, 8, 9]


def test_success_buffer_is_filtered_subsequence():
    rng = np.random.default_rng(0)
    values = rng.choice([0, 1399, 1400, 1500], size=50)
    buf = PerformanceBuffer(100, 100, 1400)
    update_buffer(buf, [rec([float(i)], m) for i, m in enumerate(values)])
    expected = [float(i) for i, m in enumerate(values) if m >= 1400]
    assert [r.context[0] for r in buf.success_records] == expected


def test_capacity_validation():
    with pytest.raises(ValueError):
        PerformanceBuffer(0, 4, 1.0)


def test_jsonl_round_trip(tmp_path):
    buf = PerformanceBuffer(2, 3, 1400)
    update_buffer(buf, [rec([float(i), 1.0], m) for i, m in enumerate([1500, 0, 1450, 1400, 3])])
    path = tmp_path / "buf.jsonl"
    buf.to_jsonl(path)
    back = PerformanceBuffer.from_jsonl(path)
    assert back.delta == 1400
    assert back.success_records.maxlen == 2 and back.recent_records.maxlen == 3
    assert len(back.records()) == len(buf.records())
    for a, b in zip(buf.records(), back.records()):
        np.testing.assert_array_equal(a.context, b.context)
        assert a.metric_value == b.metric_value
    snap, snap_back = buf.snapshot(), back.snapshot()
    np.testing.assert_array_equal(snap.values, snap_back.values)


def test_union_counts_shared_records_once():
    buf = filled([[0.0], [1.0]], [1500, 0])
    assert len(buf.success_records) == 1 and len(buf.recent_records) == 2
    assert len(buf.records()) == 2
    # a success evicted from the recent ring is still in the union
    update_buffer(buf, [rec([float(i)], 0) for i in range(2, 10_002)])
    assert any(r.metric_value == 1500 for r in buf.records())


def test_snapshot_is_read_only():
    snap = filled([[0.0], [1.0]], [1, 2]).snapshot()
    with pytest.raises(ValueError):
        snap.contexts[0, 0] = 5.0


def test_predict_single_record():
    buf = filled([[0.3, 0.4]], [7.0])
    reg = Regressor(0.1, euclidean(2))
    assert predict(reg, buf, np.array([100.0, -3.0])) == 7.0


def test_predict_equidistant_midpoint():
    buf = filled([[-1.0], [1.0]], [0.0, 10.0])
    assert predict(Regressor(0.5, euclidean(1)), buf, np.array([0.0])) == pytest.approx(5.0)


def test_predict_empty_raises():
    with pytest.raises(ValueError):
        predict(Regressor(1.0, euclidean(1)), PerformanceBuffer(2, 2, 1.0), np.zeros(1))


def test_regressor_bandwidth_positive():
    with pytest.raises(ValueError):
        Regressor(0.0, euclidean(1))


def test_predict_matches_direct_sum():
    rng = np.random.default_rng(1)
    C = rng.standard_normal((20, 3))
    M = rng.uniform(0, 1500, 20)
    buf = filled(C, M)
    for h in (0.2, 1.0, 3.0):
        reg = Regressor(h, euclidean(3))
        for q in rng.standard_normal((10, 3)):
            assert predict(reg, buf, q) == pytest.approx(nw_direct(q, C, M, h), rel=1e-10)


def test_predict_mahalanobis_matches_direct_sum():
    rng = np.random.default_rng(2)
    B = rng.standard_normal((3, 3))
    A = B @ B.T + np.eye(3)
    C = rng.standard_normal((20, 3))
    M = rng.uniform(0, 1500, 20)
    reg = Regressor(0.8, mahalanobis(A))
    for q in rng.standard_normal((5, 3)):
        assert predict(reg, filled(C, M), q) == pytest.approx(nw_direct(q, C, M, 0.8, A), rel=1e-10)


def test_predict_batch_equals_single():
    rng = np.random.default_rng(3)
    C, Q = rng.standard_normal((2, 30, 4))
    buf = filled(C, rng.uniform(0, 1, 30))
    reg = Regressor(0.5, euclidean(4))
    batch = predict(reg, buf, Q, chunk=7)
    np.testing.assert_allclose(batch, [predict(reg, buf, q) for q in Q], rtol=1e-12)


def test_predict_underflow_falls_back_to_nearest():
    buf = filled([[0.0], [10.0]], [3.0, 9.0])
    # exp(-(1e4)^2 / ...) underflows for both records; the nearer one decides
    assert predict(Regressor(1e-3, euclidean(1)), buf, np.array([1e4 - 1.0])) == 9.0


def test_bandwidth_limits():
    rng = np.random.default_rng(4)
    C = rng.standard_normal((15, 2))
    M = rng.uniform(0, 100, 15)
    buf = filled(C, M)
    q = rng.standard_normal(2)
    nearest = M[np.argmin(np.linalg.norm(C - q, axis=1))]
    assert predict(Regressor(1e-6, euclidean(2)), buf, q) == pytest.approx(nearest)
    assert predict(Regressor(1e6, euclidean(2)), buf, q) == pytest.approx(M.mean(), rel=1e-9)


@settings(max_examples=40)
@given(st.integers(1, 12), st.floats(0.05, 5.0), st.integers(0, 2**31))
def test_predict_convex_and_permutation_invariant(n, h, seed):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((n, 3))
    M = rng.uniform(0, 1500, n)
    reg = Regressor(h, euclidean(3))
    q = rng.standard_normal(3)
    p = predict(reg, BufferSnapshot(C, M), q)
    assert M.min() - 1e-9 <= p <= M.max() + 1e-9
    perm = rng.permutation(n)
    assert predict(reg, BufferSnapshot(C[perm], M[perm]), q) == pytest.approx(p, rel=1e-12, abs=1e-9)
