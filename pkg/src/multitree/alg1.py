"""Regulated sources with gamma-approximate min-cost tree scheduling.

Each slot every source signals the constant virtual rate lam_s + eps1 on its
selected tree, the links grow their virtual queues by that amount, and a
source-side regulator releases at most lam_s + eps1 real chunks.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fluid import QUANTUM, to_chunks, to_quanta
from .steiner import SteinerError, Tree, approx_min_tree, exact_min_tree, tree_cost
from .topology import Network, Scenario, Session


class StrictRatioError(SteinerError):
    pass


def regulator_release(backlog, rate):
    """Chunks released this slot: the full rate if available, else everything."""
    if backlog < 0:
        raise ValueError("regulator backlog must be >= 0")
    return rate if backlog >= rate else backlog


def regulator_trace(arrivals: Sequence[int], rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Run one regulator over an arrival series, in exact quanta.

    Returns (p, residual) in chunks: p[k] is the backlog at the start of slot
    k, residual[k] = p[k] - D(k) is what stays behind after the release.
    """
    d_max = to_quanta(rate)
    p = 0
    pre = np.empty(len(arrivals))
    left = np.empty(len(arrivals))
    for k, a in enumerate(arrivals):
        d = regulator_release(p, d_max)
        pre[k] = p
        left[k] = p - d
        p += int(a) * QUANTUM - d
    return pre / QUANTUM, left / QUANTUM


def virtual_queue_step_alg1(q: np.ndarray, trees: Sequence[Tree], virtual_rates: Sequence[float],
                            capacities: np.ndarray) -> np.ndarray:
    """[q_e + sum of virtual rates of trees through e - c_e]^+ for every link."""
    arrivals = np.zeros_like(q, dtype=float)
    for tree, r in zip(trees, virtual_rates):
        arrivals[list(tree.edges)] += r
    return np.maximum(q + arrivals - capacities, 0.0)


@dataclass
class Selection:
    tree: Tree
    cost: float
    min_cost: float = math.nan

    @property
    def ratio(self) -> float:
        if math.isnan(self.min_cost):
            return math.nan
        if self.min_cost > 0:
            return self.cost / self.min_cost
        return 1.0 if self.cost <= 0 else math.inf


def select_tree_gamma(net: Network, session: Session, q, selector: str = "exact",
                      gamma: float = 1.0, level: int = 2, strict: bool = False,
                      max_receivers: int = 12, measure: bool = True) -> Selection:
    """Tree whose cost is within ``gamma`` of the minimum.

    The exact selector meets the bound with ratio one. For the approximate
    selector the achieved ratio is measured against the exact minimum when
    that is computable; ``strict`` turns a ratio above ``gamma`` into an error.
    """
    feasible = len(session.receivers) <= max_receivers
    if selector == "exact":
        tree = exact_min_tree(net, session.source, session.receivers, q, max_receivers)
        c = tree_cost(tree, q)
        return Selection(tree, c, c)
    if selector != "approx":
        raise ValueError(f"selector must be 'exact' or 'approx', got {selector!r}")
    tree = approx_min_tree(net, session.source, session.receivers, q, level)
    sel = Selection(tree, tree_cost(tree, q))
    if feasible and (measure or strict):
        best = exact_min_tree(net, session.source, session.receivers, q, max_receivers)
        sel.min_cost = tree_cost(best, q)
        if strict and sel.ratio > gamma * (1 + 1e-12):
            raise StrictRatioError(f"session {session.id}: ratio {sel.ratio:.6g} exceeds gamma {gamma}")
    return sel


@dataclass
class Alg1State:
    q: np.ndarray
    p: list[int]  # regulator backlogs, in quanta
    trees: list[Tree | None]
    k: int = 0
    history: deque = field(default_factory=deque)

    @classmethod
    def initial(cls, net: Network, n_sessions: int, control_delay: int = 0) -> "Alg1State":
        return cls(np.zeros(net.num_links), [0] * n_sessions, [None] * n_sessions,
                   history=deque(maxlen=control_delay + 1))

    @property
    def backlog(self) -> list[float]:
        return [to_chunks(x) for x in self.p]


@dataclass
class SlotOutput:
    """What one scheduler slot hands to the data plane and the log."""

    trees: list[Tree]
    release: list[int]  # quanta per session
    costs: list[float]
    min_costs: list[float]
    virtual_in: np.ndarray
    candidate_min: list[bool] | None = None
    compare_violations: int = 0


def alg1_slot(state: Alg1State, arrivals: Sequence[int], net: Network,
              scenario: Scenario) -> SlotOutput:
    """Advance ``state`` by one slot in place.

    Order: select trees on the (possibly delayed) virtual queues, run the
    regulators, update the virtual queues with the constant virtual rates.
    """
    state.history.append(state.q)
    q_sel = state.history[0].tolist()
    trees, costs, mins, release = [], [], [], []
    virtual_in = np.zeros(net.num_links)
    measure = scenario.selector == "approx"
    for s, sess in enumerate(scenario.sessions):
        sel = select_tree_gamma(net, sess, q_sel, scenario.selector, scenario.gamma,
                                scenario.approx_level, scenario.strict,
                                scenario.exact_max_receivers, measure)
        trees.append(sel.tree)
        costs.append(sel.cost)
        mins.append(sel.min_cost)
        rate = sess.rate + scenario.eps1
        d = regulator_release(state.p[s], to_quanta(rate))
        state.p[s] += arrivals[s] * QUANTUM - d
        release.append(d)
        virtual_in[list(sel.tree.edges)] += rate
    state.q = np.maximum(state.q + virtual_in - net.capacities, 0.0)
    state.trees = trees
    state.k += 1
    return SlotOutput(trees, release, costs, mins, virtual_in)
