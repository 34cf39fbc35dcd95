import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multitree.engine import run
from multitree.metrics import (MetricsError, MetricsLog, cesaro, classify, control_overhead,
                               cumulative_receiving_rate, export_csv, loynes_bruteforce,
                               loynes_check, loynes_check_csv, loynes_oracle, overflow_estimate,
                               receiving_rate, tail_slope, traffic_intensity)
from multitree.topology import Scenario, toy_k4


def test_overflow_estimate():
    assert overflow_estimate([5] * 10, 10) == 0.0
    assert overflow_estimate([5] * 10, 3) == 1.0
    assert overflow_estimate([0, 0, 9, 9], 1, (2, 4)) == 1.0
    with pytest.raises(MetricsError):
        overflow_estimate([1, 2], 0, (1, 5))


def synthetic_log(q_total, rate=1.0):
    K = len(q_total)
    lg = MetricsLog.allocate(K, 1, 1, [(0, 1)], [1.0], [rate])
    lg.q[:, 0] = q_total
    return lg


def test_classify_zero_and_ramp():
    assert classify(synthetic_log(np.zeros(20_000))).verdict == "stable"
    assert classify(synthetic_log(np.arange(20_000, dtype=float))).verdict == "unstable"
    with pytest.raises(MetricsError):
        classify(synthetic_log(np.zeros(100)))


def test_tail_slope():
    assert tail_slope(np.arange(100.0) * 3) == pytest.approx(3.0)
    assert tail_slope([1.0]) == 0.0


def test_loynes_hand_example():
    x = np.zeros(10, dtype=np.int64)
    x[4] = 7
    q = loynes_oracle(x, 3)
    assert q[4:7].tolist() == [4, 1, 0]
    assert not q[:4].any() and not q[7:].any()
    assert not loynes_oracle(np.zeros(5, dtype=np.int64), 3).any()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=1, max_size=40), st.integers(1, 8))
def test_loynes_matches_bruteforce_and_lindley(xs, c):
    x = np.array(xs, dtype=np.int64)
    fast = loynes_oracle(x, c)
    lindley, q = [], 0
    for a in xs:
        q = max(q + a - c, 0)
        lindley.append(q)
    assert fast.tolist() == lindley
    assert all(fast[k] == loynes_bruteforce(xs, c, k) for k in range(len(xs)))


def test_receiving_rates():
    lg = MetricsLog.allocate(10, 1, 1, [(0, 1), (0, 2)], [1.0], [1.0])
    assert receiving_rate(lg, 1) == 0.0
    lg.delivered[:, 0] = 2.5
    assert receiving_rate(lg, 1) == 2.5
    assert cumulative_receiving_rate(lg, 1)[-1] == 2.5
    with pytest.raises(MetricsError):
        receiving_rate(lg, 7)


def test_cesaro():
    assert cesaro([2.0, 4.0, 6.0]).tolist() == [2.0, 3.0, 4.0]


def test_control_overhead_values():
    co = control_overhead(300, 3000)
    assert (co.forward_bits, co.feedback_bits) == (163_200, 249_600)
    assert control_overhead(300, 3000, slot_seconds=0.5).forward_bps == 326_400
    zero = control_overhead(0, 0)
    assert (zero.forward_bits, zero.feedback_bits) == (0, 0)
    with pytest.raises(ValueError):
        control_overhead(-1, 0)


def k4_log(slots, **kw):
    net, sess = toy_k4()
    return run(Scenario(net, (sess.with_rate(2.7),), eps1=0.03, slots=slots, **kw))


def test_engine_matches_loynes():
    for alg, sel in (("alg1", "exact"), ("alg2", "random")):
        net, sess = toy_k4()
        lg = run(Scenario(net, (sess.with_rate(3.1),), algorithm=alg, selector=sel, eps1=0.03,
                          slots=1500, seed=5, record_hops=True))
        assert lg.hop_backlog.any()
        assert loynes_check(lg) == 0.0


def test_loynes_check_needs_hops():
    with pytest.raises(MetricsError):
        loynes_check(k4_log(5))


def test_traffic_intensity_below_one():
    lg = k4_log(3000, seed=2)
    assert np.all(traffic_intensity(lg) < 1.0)


def test_export_empty_headers_only(tmp_path):
    lg = k4_log(0)
    paths = export_csv(lg, tmp_path, "x")
    assert len(paths) == 5
    for p in paths:
        assert len(p.read_text().splitlines()) == 1


def test_export_two_rows_and_deterministic(tmp_path):
    lg = k4_log(2, record_hops=True)
    first = export_csv(lg, tmp_path / "a", "x")
    for p in first:
        if not p.name.endswith("hops.csv"):
            assert len(p.read_text().splitlines()) == 3
    second = export_csv(lg, tmp_path / "b", "x")
    assert [p.read_bytes() for p in first] == [p.read_bytes() for p in second]
    hops = [p for p in first if p.name.endswith("hops.csv")][0]
    assert loynes_check_csv(hops) == 0.0
