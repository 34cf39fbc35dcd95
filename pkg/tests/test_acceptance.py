"""Acceptance criteria, one test each; every test adds one PASS/FAIL line to
the terminal summary. Seeds are fixed at 0 and were not tuned."""

import hashlib
import random
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, random_digraph
from multitree.alg1 import regulator_trace
from multitree.engine import ArrivalProcess, run
from multitree.metrics import (cesaro, classify, control_overhead, loynes_check, tail_slope,
                               traffic_intensity)
from multitree.rate_region import max_uniform_rate
from multitree.steiner import enumerate_trees, exact_min_tree, tree_cost
from multitree.topology import ArrivalSpec, Scenario, Session, from_edges, toy_k4

SEED = 0
K = 100_000
LAM_STAR = 3.0  # K4 toy, checked by criterion 2

_runs: dict[str, tuple[Scenario, object]] = {}
_seconds: dict[str, float] = {}


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


def k4(rate: float, **kw) -> Scenario:
    net, sess = toy_k4()
    kw.setdefault("seed", SEED)
    kw.setdefault("record_hops", True)
    return Scenario(net, (sess.with_rate(rate),), **kw)


def get_run(name: str, scenario: Scenario):
    if name not in _runs:
        t = time.perf_counter()
        log = run(scenario)
        _seconds[name] = time.perf_counter() - t
        _runs[name] = (scenario, log)
    return _runs[name][1]


def digest(log) -> str:
    h = hashlib.sha256()
    for name in ("q", "backlog", "link_arrivals", "virtual_in", "regulator", "arrivals",
                 "released", "tree_id", "tree_cost", "min_cost", "candidate_min", "delivered",
                 "hop_arrivals", "hop_backlog"):
        arr = getattr(log, name)
        if arr is not None:
            h.update(np.ascontiguousarray(arr).tobytes())
    h.update(repr(log.trees).encode())
    return h.hexdigest()


# scenarios -------------------------------------------------------------------

ALG1_STABLE = dict(algorithm="alg1", selector="exact", eps1=0.01 * LAM_STAR, slots=K)
ALG2 = dict(algorithm="alg2", selector="random", eps2=0.05 * LAM_STAR, delta=0.1, slots=K)


def test_criterion_01_steiner_oracle():
    rng = random.Random(SEED)
    t = time.perf_counter()
    mismatches = 0
    for _ in range(20):
        net, recv, q = random_digraph(rng, max_nodes=7)
        best = min(tree_cost(tr, q) for tr in enumerate_trees(net, 0, recv))
        if tree_cost(exact_min_tree(net, 0, recv, q), q) != best:
            mismatches += 1
    dt = time.perf_counter() - t
    record(1, mismatches == 0 and dt < 10.0,
           f"{20 - mismatches}/20 instances equal the enumeration minimum, {dt:.2f}s (limit 10s)")


def test_criterion_02_throughput_oracle():
    net, sess = toy_k4()
    lam = max_uniform_rate(net, [sess])
    path = from_edges([(0, 1, 5), (1, 2, 3), (2, 3, 4)])
    lam_path = max_uniform_rate(path, [Session(0, 0, (3,))])
    record(2, abs(lam - 3.0) <= 1e-6 and lam_path == 3.0,
           f"K4 lambda*={lam!r} (want 3 +- 1e-6), path lambda*={lam_path!r} (want 3 exactly)")


def test_criterion_03_alg1_transition():
    t = time.perf_counter()
    lo = get_run("alg1_0.9", k4(0.9 * LAM_STAR, **ALG1_STABLE))
    hi = get_run("alg1_1.1", k4(1.1 * LAM_STAR, **ALG1_STABLE))
    v_lo, v_hi = classify(lo), classify(hi)
    dt = time.perf_counter() - t
    half = K // 2
    qmax = lo.q.max(axis=1)
    q_ok = qmax[half:].max() <= qmax[:half].max() + 5.0
    p = lo.regulator[:, 0]
    p_level = 2.0 * p[:half].max() + 0.9 * LAM_STAR + 0.01 * LAM_STAR
    p_ok = p[half:].max() <= p_level and abs(tail_slope(p)) <= 0.01 * 0.9 * LAM_STAR
    slope_hi = tail_slope(hi.q.sum(axis=1))
    ok = (q_ok and p_ok and v_lo.verdict == "stable" and v_hi.verdict == "unstable"
          and slope_hi >= 0.05 * LAM_STAR and dt < 60.0)
    record(3, ok,
           f"0.9: {v_lo.verdict}, max q halves {qmax[:half].max():.3f}/{qmax[half:].max():.3f}, "
           f"max p halves {p[:half].max():.2f}/{p[half:].max():.2f}; "
           f"1.1: {v_hi.verdict}, sum-q tail slope {slope_hi:.4f} (want >= {0.05 * LAM_STAR:.2f}); "
           f"{dt:.1f}s (limit 60s)")


def test_criterion_04_gamma_degradation():
    pilot = get_run("approx_pilot", k4(0.9 * LAM_STAR, **{**ALG1_STABLE, "selector": "approx",
                                                          "slots": 20_000}))
    gamma_hat = float(np.nanmax(pilot.ratio()))
    rate = 0.9 * LAM_STAR / gamma_hat
    log = get_run("approx_main", k4(rate, **{**ALG1_STABLE, "selector": "approx",
                                             "gamma": max(gamma_hat, 1.0)}))
    ratios = log.ratio()
    seen = float(np.nanmax(ratios))
    verdict = classify(log).verdict
    record(4, verdict == "stable" and seen <= gamma_hat,
           f"pilot gamma_hat={gamma_hat:.4f}, run at lambda={rate:.4f}: {verdict}, "
           f"max per-slot ratio {seen:.4f}, share of slots with ratio>1: "
           f"{float(np.mean(ratios > 1)):.4f}")


def test_criterion_06_alg2_properties():
    lo = get_run("alg2_0.9", k4(0.9 * LAM_STAR, **ALG2))
    hi = get_run("alg2_1.1", k4(1.1 * LAM_STAR, **ALG2))
    eps2 = ALG2["eps2"]
    c = lo.capacities
    ces = cesaro(lo.q)
    end, q3 = ces[-1], ces[3 * K // 4 - 1]
    change = np.where(end > 0, np.abs(end - q3) / np.where(end > 0, end, 1.0), 0.0)
    a = bool(np.all(change < 0.01))
    avg_in = lo.virtual_in.mean(axis=0)
    b = bool(np.all(avg_in <= c - eps2 + 1e-6))
    rho = traffic_intensity(lo)
    c_ok = bool(np.all(rho < 1.0))
    d = bool(np.all(lo.backlog[-1] / K < 1e-3))
    e = lo.compare_violations == 0
    v_hi = classify(hi).verdict
    ok = a and b and c_ok and d and e and v_hi == "unstable"
    record(6, ok,
           f"(a) max Cesaro change over final quarter {change.max():.4f} (<0.01: {a}); "
           f"(b) max virtual arrival avg minus (c-eps2) {float((avg_in - (c - eps2)).max()):+.4f} ({b}); "
           f"(c) max rho {rho.max():.4f} ({c_ok}); (d) max Q(K)/K {float(lo.backlog[-1].max()) / K:.2e} ({d}); "
           f"(e) compare violations {lo.compare_violations} ({e}); 1.1: {v_hi}; "
           f"eps2={eps2:.3g} exceeds the slack eps0=0.1 of lambda=2.7, see decisions ledger")


def test_criterion_07_pick_condition():
    log = get_run("alg2_pick", k4(0.9 * LAM_STAR, **{**ALG2, "slots": 10_000}))
    n = log.slots
    freq = float(log.candidate_min[:, 0].mean())
    floor = 0.1 - 3 * np.sqrt(0.1 * 0.9 / n)
    record(7, freq >= floor, f"min-cost candidate frequency {freq:.4f} over {n} slots "
                             f"(floor {floor:.4f})")


def test_criterion_08_control_overhead():
    co = control_overhead(300, 3000)
    half = control_overhead(300, 3000, slot_seconds=0.5)
    ok = (co.forward_bits, co.feedback_bits) == (163_200, 249_600) and half.forward_bps == 326_400
    record(8, ok, f"forward {co.forward_bits} bits, feedback {co.feedback_bits} bits, "
                  f"forward rate at 0.5 s slots {half.forward_bps / 1e3:.1f} Kbps")


def test_criterion_09_poisson_calibration():
    proc = ArrivalProcess(ArrivalSpec("poisson", 972.0), np.random.default_rng(SEED))
    x = np.array([proc.draw() for _ in range(100_000)])
    m, s = float(x.mean()), float(x.std(ddof=1))
    record(9, abs(m - 972) <= 0.01 * 972 and abs(s - 31.2) <= 0.05 * 31.2,
           f"mean {m:.2f} (972 +- 1%), std {s:.3f} (31.2 +- 5%)")


def test_criterion_10_regulator_heavy_load():
    proc = ArrivalProcess(ArrivalSpec("poisson", 100.0), np.random.default_rng(SEED))
    arrivals = [proc.draw() for _ in range(K)]
    pre, left = regulator_trace(arrivals, 100.1)
    tail = left[-10_000:]
    ok = bool(tail.min() < 10.0)
    record(10, ok, f"post-release backlog min over final 1e4 slots {tail.min():.2f} (want < 10), "
                   f"max over run {left.max():.1f}, slots below 10 in tail {int((tail < 10).sum())}; "
                   f"start-of-slot backlog includes the previous slot's arrivals, min {pre[1:].min():.1f}")


def test_criterion_05_loynes_all_runs():
    for name, scenario in (("alg1_0.9", k4(0.9 * LAM_STAR, **ALG1_STABLE)),
                           ("alg1_1.1", k4(1.1 * LAM_STAR, **ALG1_STABLE)),
                           ("alg2_0.9", k4(0.9 * LAM_STAR, **ALG2)),
                           ("alg2_1.1", k4(1.1 * LAM_STAR, **ALG2))):
        get_run(name, scenario)
    gaps = {name: loynes_check(log) for name, (_, log) in sorted(_runs.items())}
    worst = max(gaps.values())
    record(5, worst <= 1e-9, f"max |engine - oracle| {worst:.3g} chunks over {len(gaps)} runs "
                             f"({', '.join(sorted(gaps))})")


def test_criterion_11_determinism():
    if not _runs:
        pytest.skip("no acceptance runs in this session")
    bad = []
    for name, (scenario, log) in sorted(_runs.items()):
        if digest(run(scenario)) != digest(log):
            bad.append(name)
    record(11, not bad, f"{len(_runs) - len(bad)}/{len(_runs)} runs byte-identical on re-run"
                        + (f"; differing: {', '.join(bad)}" if bad else ""))
