"""Run logs, stability verdicts, the closed-form backlog oracle, and exports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fluid import QUANTUM


@dataclass
class MetricsLog:
    """Per-slot series of one run. Row k describes slot k after all its updates.

    Chunk-valued series are floats; ``hop_arrivals``/``hop_backlog`` hold exact
    integer quanta per (slot, link, hop class) when hop recording is on.
    """

    q: np.ndarray  # (K, E) virtual queues after the slot
    backlog: np.ndarray  # (K, E) real backlog Q_e after service
    link_arrivals: np.ndarray  # (K, E) real chunks entering each link
    virtual_in: np.ndarray  # (K, E) signaled chunks entering each virtual queue
    regulator: np.ndarray  # (K, S) p_s after the slot
    arrivals: np.ndarray  # (K, S) exogenous A_s(k)
    released: np.ndarray  # (K, S) real chunks injected
    tree_id: np.ndarray  # (K, S)
    tree_cost: np.ndarray  # (K, S) cost of the selected tree under the selection costs
    min_cost: np.ndarray  # (K, S) exact minimum cost, nan when not measured
    candidate_min: np.ndarray  # (K, S) alg2: candidate was a min-cost tree
    delivered: np.ndarray  # (K, R) chunks delivered per (session, receiver) pair
    receivers: list[tuple[int, int]]
    trees: list[tuple[int, tuple[int, ...]]]
    capacities: np.ndarray
    rates: tuple[float, ...]
    hop_arrivals: np.ndarray | None = None
    hop_backlog: np.ndarray | None = None
    compare_violations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def slots(self) -> int:
        return self.q.shape[0]

    @property
    def total_rate(self) -> float:
        return float(sum(self.rates))

    def ratio(self) -> np.ndarray:
        """Per-slot selected/min cost ratio (nan where unmeasured)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self.tree_cost / self.min_cost
        r = np.where((self.min_cost == 0) & (self.tree_cost == 0), 1.0, r)
        return np.where(np.isnan(self.min_cost), np.nan, r)

    @classmethod
    def allocate(cls, slots: int, n_links: int, n_sessions: int, receivers, capacities,
                 rates, hops: int | None = None) -> "MetricsLog":
        f = lambda *shape: np.zeros(shape)  # noqa: E731
        return cls(
            q=f(slots, n_links), backlog=f(slots, n_links), link_arrivals=f(slots, n_links),
            virtual_in=f(slots, n_links), regulator=f(slots, n_sessions),
            arrivals=np.zeros((slots, n_sessions), dtype=np.int64), released=f(slots, n_sessions),
            tree_id=np.zeros((slots, n_sessions), dtype=np.int64), tree_cost=f(slots, n_sessions),
            min_cost=np.full((slots, n_sessions), np.nan),
            candidate_min=np.zeros((slots, n_sessions), dtype=bool),
            delivered=f(slots, len(receivers)), receivers=list(receivers), trees=[],
            capacities=np.asarray(capacities, dtype=float), rates=tuple(rates),
            hop_arrivals=None if hops is None else np.zeros((slots, n_links, hops), dtype=np.int64),
            hop_backlog=None if hops is None else np.zeros((slots, n_links, hops), dtype=np.int64),
        )


class MetricsError(ValueError):
    pass


# --------------------------------------------------------------------------
# overflow and verdicts


def overflow_estimate(trace, m: float, window: slice | tuple[int, int] | None = None) -> float:
    """Fraction of slots in ``window`` whose value exceeds ``m``."""
    trace = np.asarray(trace, dtype=float)
    if window is None:
        part = trace
    elif isinstance(window, slice):
        part = trace[window]
    else:
        lo, hi = window
        if not 0 <= lo <= hi <= len(trace):
            raise MetricsError(f"window {window} outside [0, {len(trace)}]")
        part = trace[lo:hi]
    if part.size == 0:
        raise MetricsError("empty window")
    return float(np.mean(part > m))


def tail_slope(trace) -> float:
    """Least-squares slope (per slot) over the second half of the trace."""
    trace = np.asarray(trace, dtype=float)
    tail = trace[len(trace) // 2:]
    if len(tail) < 2:
        return 0.0
    x = np.arange(len(tail), dtype=float)
    x -= x.mean()
    return float(x @ (tail - tail.mean()) / (x @ x))


@dataclass
class StabilityVerdict:
    verdict: str  # "stable" | "unstable" | "inconclusive"
    virtual_slope: float
    real_slope: float
    threshold: float
    overflow: dict[str, list[tuple[float, float]]]
    overflow_at_max: dict[str, float]

    def summary(self) -> str:
        return (f"{self.verdict} (slopes virtual={self.virtual_slope:.4g}, "
                f"real={self.real_slope:.4g}, threshold={self.threshold:.4g})")


def _overflow_level(trace: np.ndarray, total_rate: float) -> float:
    head = trace[: len(trace) // 2]
    return 2.0 * float(head.max(initial=0.0)) + max(total_rate, 1.0)


def classify(log: MetricsLog, min_slots: int = 10_000, slope_factor: float = 0.01,
             grid_points: int = 8) -> StabilityVerdict:
    """Stable / unstable / inconclusive from the tails of sum(q) and sum(Q).

    Unstable when either tail slope exceeds ``slope_factor * sum(lam)`` per
    slot. Stable when both slopes are within that band and neither series
    exceeds its overflow level on the tail; the level is twice the maximum
    seen over the first half plus sum(lam).
    """
    if log.slots < min_slots:
        raise MetricsError(f"run has {log.slots} slots; classification needs {min_slots}")
    total = log.total_rate
    thr = slope_factor * max(total, 1e-12)
    series = {"virtual": log.q.sum(axis=1), "real": log.backlog.sum(axis=1)}
    slopes = {k: tail_slope(v) for k, v in series.items()}
    half = log.slots // 2
    overflow: dict[str, list[tuple[float, float]]] = {}
    at_max: dict[str, float] = {}
    for name, tr in series.items():
        m_max = _overflow_level(tr, total)
        grid = np.linspace(0.0, m_max, grid_points)
        overflow[name] = [(float(m), overflow_estimate(tr, m, (half, log.slots))) for m in grid]
        at_max[name] = overflow[name][-1][1]
    if max(slopes.values()) > thr:
        verdict = "unstable"
    elif all(abs(s) <= thr for s in slopes.values()) and all(v == 0 for v in at_max.values()):
        verdict = "stable"
    else:
        verdict = "inconclusive"
    return StabilityVerdict(verdict, slopes["virtual"], slopes["real"], thr, overflow, at_max)


# --------------------------------------------------------------------------
# closed-form backlog


def loynes_oracle(arrivals, capacity, k: int | None = None):
    """Backlog as the largest (arrivals - capacity) surplus over windows ending at k.

    ``arrivals`` is the per-slot arrival series of one queue started empty;
    the result is clamped at zero. Returns the whole backlog series when ``k``
    is None. Integer inputs give exact integer results.
    """
    x = np.asarray(arrivals)
    exact = np.issubdtype(x.dtype, np.integer) and float(capacity).is_integer()
    if exact:
        c = np.int64(capacity)
        net = x.astype(np.int64) - c
    else:
        net = x.astype(float) - float(capacity)
    # window [k0, k] surplus = S(k) - S(k0 - 1) with S(-1) = 0
    s = np.cumsum(net, axis=0)
    zero = np.zeros_like(s[:1])
    prev = np.concatenate([zero, s[:-1]], axis=0)
    lowest = np.minimum.accumulate(prev, axis=0)
    q = np.maximum(s - lowest, 0)
    return q if k is None else q[k]


def loynes_bruteforce(arrivals, capacity, k: int) -> float:
    """Direct maximum over window starts; quadratic, for tests."""
    best = 0.0
    for k0 in range(k + 1):
        best = max(best, sum(arrivals[k0:k + 1]) - capacity * (k - k0 + 1))
    return best


def loynes_check(log: MetricsLog) -> float:
    """Largest |engine Q_e(k,h) - oracle| in chunks, over all links, classes and slots.

    Q_e(k,h) is the backlog of hop classes 1..h; under hop priority that
    aggregate is a single queue served at c_e, so the oracle applies to the
    cumulative arrival series of classes 1..h.
    """
    if log.hop_arrivals is None or log.hop_backlog is None:
        raise MetricsError("run was not recorded with hop classes")
    x = np.cumsum(log.hop_arrivals, axis=2)
    engine = np.cumsum(log.hop_backlog, axis=2)
    worst = 0
    for e in range(x.shape[1]):
        cap = int(round(log.capacities[e] * QUANTUM))
        for h in range(x.shape[2]):
            oracle = loynes_oracle(x[:, e, h], cap)
            if len(oracle):
                worst = max(worst, int(np.max(np.abs(oracle - engine[:, e, h]))))
    return worst / QUANTUM


# --------------------------------------------------------------------------
# rates, intensities


def receiving_rate(log: MetricsLog, receiver: int, window: tuple[int, int] | None = None,
                   session: int | None = None) -> float:
    """Average chunks per slot delivered to ``receiver`` over ``window``."""
    idx = _receiver_columns(log, receiver, session)
    lo, hi = window if window is not None else (0, log.slots)
    if hi <= lo:
        raise MetricsError("empty window")
    return float(log.delivered[lo:hi, idx].sum() / (hi - lo))


def cumulative_receiving_rate(log: MetricsLog, receiver: int, session: int | None = None) -> np.ndarray:
    idx = _receiver_columns(log, receiver, session)
    total = np.cumsum(log.delivered[:, idx].sum(axis=1))
    return total / np.arange(1, log.slots + 1)


def _receiver_columns(log: MetricsLog, receiver: int, session: int | None) -> list[int]:
    idx = [i for i, (s, v) in enumerate(log.receivers)
           if v == receiver and (session is None or s == session)]
    if not idx:
        raise MetricsError(f"unknown receiver {receiver}")
    return idx


def traffic_intensity(log: MetricsLog) -> np.ndarray:
    """Cumulative real arrivals at each link over K * c_e."""
    return log.link_arrivals.sum(axis=0) / (log.slots * log.capacities)


def cesaro(trace) -> np.ndarray:
    trace = np.asarray(trace, dtype=float)
    return np.cumsum(trace, axis=0) / np.arange(1, len(trace) + 1).reshape((-1,) + (1,) * (trace.ndim - 1))


# --------------------------------------------------------------------------
# control overhead


@dataclass(frozen=True)
class ControlOverhead:
    forward_bits: int
    feedback_bits: int
    forward_bps: float
    feedback_bps: float


def control_overhead(n: int, m: int, header_bytes: int = 20, id_bits: int = 32,
                     slot_seconds: float = 1.0) -> ControlOverhead:
    """Per-slot bits of forward signaling and of cost feedback for one source.

    Forward: per node a header, the rate and the session id; per link its id.
    Feedback: per node a header and its id; per link an id and a cost.
    """
    if n < 0 or m < 0:
        raise ValueError("n and m must be >= 0")
    header = header_bytes * 8
    fwd = (header + 2 * id_bits) * n + id_bits * m
    fb = (header + id_bits) * n + 2 * id_bits * m
    return ControlOverhead(fwd, fb, fwd / slot_seconds, fb / slot_seconds)


# --------------------------------------------------------------------------
# export

SERIES = ("virtual_queues", "real_queues", "regulators", "receiving_rates", "tree_selections")


def _fmt(x) -> str:
    return repr(float(x))


def export_csv(log: MetricsLog, directory, prefix: str) -> list[Path]:
    """One wide CSV per series family, named ``<prefix>.<series>.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    E = log.q.shape[1]
    S = log.regulator.shape[1]
    paths = []

    def write(series: str, header: list[str], rows) -> None:
        path = directory / f"{prefix}.{series}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        paths.append(path)

    K = log.slots
    write("virtual_queues", ["slot"] + [f"q{e}" for e in range(E)],
          ([k] + [_fmt(v) for v in log.q[k]] for k in range(K)))
    write("real_queues", ["slot"] + [f"Q{e}" for e in range(E)],
          ([k] + [_fmt(v) for v in log.backlog[k]] for k in range(K)))
    write("regulators",
          ["slot"] + [f"{c}{s}" for s in range(S) for c in ("p", "A", "D")],
          ([k] + [x for s in range(S) for x in (_fmt(log.regulator[k, s]), int(log.arrivals[k, s]),
                                                 _fmt(log.released[k, s]))] for k in range(K)))
    cum = np.cumsum(log.delivered, axis=0)
    write("receiving_rates",
          ["slot"] + [f"s{s}_r{v}" for s, v in log.receivers],
          ([k] + [_fmt(c / (k + 1)) for c in cum[k]] for k in range(K)))
    trees = [";".join(map(str, edges)) for _, edges in log.trees]
    write("tree_selections",
          ["slot"] + [f"{c}{s}" for s in range(S) for c in ("tree", "cost", "min_cost")],
          ([k] + [x for s in range(S) for x in (trees[log.tree_id[k, s]], _fmt(log.tree_cost[k, s]),
                                                 _fmt(log.min_cost[k, s]))] for k in range(K)))
    if log.hop_arrivals is not None:
        H = log.hop_arrivals.shape[2]
        caps = [int(round(c * QUANTUM)) for c in log.capacities]
        write("hops", ["slot", "link", "hop", "capacity_q", "arrivals_q", "backlog_q"],
              ([k, e, h + 1, caps[e], int(log.hop_arrivals[k, e, h]), int(log.hop_backlog[k, e, h])]
               for k in range(K) for e in range(E) for h in range(H)))
    return paths


def loynes_check_csv(path) -> float:
    """Replay an exported ``hops`` CSV through the oracle; max discrepancy in chunks."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if rows.size == 0:
        return 0.0
    K = int(rows[:, 0].max()) + 1
    E = int(rows[:, 1].max()) + 1
    H = int(rows[:, 2].max())
    x = np.zeros((K, E, H), dtype=np.int64)
    b = np.zeros((K, E, H), dtype=np.int64)
    caps = np.zeros(E, dtype=np.int64)
    x[rows[:, 0], rows[:, 1], rows[:, 2] - 1] = rows[:, 4]
    b[rows[:, 0], rows[:, 1], rows[:, 2] - 1] = rows[:, 5]
    caps[rows[:, 1]] = rows[:, 3]
    xs, bs = np.cumsum(x, axis=2), np.cumsum(b, axis=2)
    worst = 0
    for e in range(E):
        for h in range(H):
            worst = max(worst, int(np.max(np.abs(loynes_oracle(xs[:, e, h], caps[e]) - bs[:, e, h]))))
    return worst / QUANTUM


def summarize(log: MetricsLog, verdict: StabilityVerdict | None) -> dict:
    out = {
        "slots": log.slots,
        "final_sum_q": float(log.q[-1].sum()) if log.slots else 0.0,
        "final_sum_Q": float(log.backlog[-1].sum()) if log.slots else 0.0,
        "max_regulator": float(log.regulator.max(initial=0.0)),
        "compare_violations": log.compare_violations,
        "meta": log.meta,
    }
    if verdict is not None:
        out["verdict"] = verdict.verdict
        out["virtual_slope"] = verdict.virtual_slope
        out["real_slope"] = verdict.real_slope
    r = log.ratio()
    if np.isfinite(r).any() or np.isinf(r).any():
        measured = r[~np.isnan(r)]
        if measured.size:
            out["max_ratio"] = float(measured.max())
    if log.slots:
        out["traffic_intensity_max"] = float(traffic_intensity(log).max())
    out["loynes_discrepancy"] = None if log.hop_arrivals is None else loynes_check(log)
    if not math.isfinite(out.get("max_ratio", 0.0)):
        out["max_ratio"] = "inf"
    return out
