"""Unregulated signaling with pick-and-compare randomized tree scheduling.

Sources signal their actual arrivals, links serve their virtual queues at the
reduced rate c_e - eps2, and each source keeps its previous tree unless a
freshly sampled candidate is no more expensive under the current costs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .alg1 import SlotOutput
from .fluid import QUANTUM
from .steiner import Tree, bfs_tree, exact_min_tree, sample_random_tree, tree_cost
from .topology import Network, Scenario, Session


class ConfigurationError(ValueError):
    pass


def check_eps2(capacities: np.ndarray, eps2: float) -> None:
    if not 0 < eps2 < float(np.min(capacities)):
        raise ConfigurationError(
            f"eps2={eps2} must lie in (0, min capacity={float(np.min(capacities))})")


def virtual_queue_step_alg2(q: np.ndarray, trees: Sequence[Tree], arrivals: Sequence[float],
                            capacities: np.ndarray, eps2: float) -> np.ndarray:
    """[q_e + signaled arrivals through e - (c_e - eps2)]^+ for every link."""
    check_eps2(capacities, eps2)
    inflow = np.zeros_like(q, dtype=float)
    for tree, a in zip(trees, arrivals):
        inflow[list(tree.edges)] += a
    return np.maximum(q + inflow - (capacities - eps2), 0.0)


def pick(net: Network, session: Session, q, rng, delta: float, max_receivers: int = 12,
         approx_level: int = 2) -> Tree:
    return sample_random_tree(net, session.source, session.receivers, q, rng, delta,
                              max_receivers, approx_level)


def compare(candidate: Tree, previous: Tree, q) -> Tree:
    """Candidate wins ties: it is kept iff its cost is <= the previous tree's."""
    return candidate if tree_cost(candidate, q) <= tree_cost(previous, q) else previous


@dataclass
class Alg2State:
    q: np.ndarray
    trees: list[Tree]
    k: int = 0
    history: deque = field(default_factory=deque)

    @classmethod
    def initial(cls, net: Network, sessions: Sequence[Session], control_delay: int = 0) -> "Alg2State":
        trees = [bfs_tree(net, s.source, s.receivers) for s in sessions]
        return cls(np.zeros(net.num_links), trees, history=deque(maxlen=control_delay + 1))


def alg2_slot(state: Alg2State, arrivals: Sequence[int], net: Network, scenario: Scenario,
              rngs: Sequence, measure: bool = True) -> SlotOutput:
    """Advance ``state`` by one slot in place; ``rngs`` holds one stream per session.

    With ``measure`` the exact minimum cost is computed each slot so the log
    can tell whether the candidate was a min-cost tree.
    """
    state.history.append(state.q)
    q_sel = state.history[0].tolist()
    trees, costs, mins, flags = [], [], [], []
    violations = 0
    inflow = np.zeros(net.num_links)
    for s, sess in enumerate(scenario.sessions):
        cand = pick(net, sess, q_sel, rngs[s], scenario.delta, scenario.exact_max_receivers,
                    scenario.approx_level)
        prev = state.trees[s]
        chosen = compare(cand, prev, q_sel)
        c = tree_cost(chosen, q_sel)
        if c > tree_cost(prev, q_sel):
            violations += 1
        trees.append(chosen)
        costs.append(c)
        if measure and len(sess.receivers) <= scenario.exact_max_receivers:
            m = tree_cost(exact_min_tree(net, sess.source, sess.receivers, q_sel,
                                         scenario.exact_max_receivers), q_sel)
            mins.append(m)
            flags.append(tree_cost(cand, q_sel) <= m + 1e-9 * max(1.0, m))
        else:
            mins.append(float("nan"))
            flags.append(False)
        inflow[list(chosen.edges)] += arrivals[s]
    state.q = np.maximum(state.q + inflow - (net.capacities - scenario.eps2), 0.0)
    state.trees = trees
    state.k += 1
    release = [int(a) * QUANTUM for a in arrivals]
    return SlotOutput(trees, release, costs, mins, inflow, flags, violations)
