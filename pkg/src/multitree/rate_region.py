"""Throughput-region oracle: tree-packing linear programs over enumerated trees.

Desk-scale only: one LP column per tree, trees come from ``enumerate_trees``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .steiner import Tree, enumerate_trees, tree_cost
from .topology import Network, Session

FEAS_TOL = 1e-9


class RegionError(RuntimeError):
    pass


@dataclass
class TreeRateAllocation:
    """Per-session tree weights (summing to one) and the uniform slack eps0."""

    trees: list[list[tuple[Tree, float]]]
    rates: tuple[float, ...]
    eps0: float

    def link_loads(self, net: Network) -> np.ndarray:
        load = np.zeros(net.num_links)
        for lam, pairs in zip(self.rates, self.trees):
            for tree, alpha in pairs:
                for e in tree.edges:
                    load[e] += alpha * lam
        return load

    def verify(self, net: Network, tol: float = 1e-7) -> None:
        """Re-check the weights and capacities by direct summation."""
        for pairs in self.trees:
            if any(a < -tol for _, a in pairs):
                raise RegionError("negative tree weight")
            if pairs and abs(sum(a for _, a in pairs) - 1.0) > tol:
                raise RegionError("tree weights do not sum to one")
        excess = self.link_loads(net) - net.capacities
        if excess.max(initial=-np.inf) > tol:
            raise RegionError(f"capacity exceeded by {excess.max():.3g}")

    def to_text(self, net: Network) -> str:
        lines = [f"# eps0 {self.eps0!r}"]
        for s, (lam, pairs) in enumerate(zip(self.rates, self.trees)):
            lines.append(f"session {s} rate {lam!r}")
            for tree, alpha in pairs:
                if alpha > FEAS_TOL:
                    lines.append(f"  {alpha:.12g} {tree.key()}")
        return "\n".join(lines) + "\n"


@dataclass
class Inside:
    eps0: float
    allocation: TreeRateAllocation
    inside: bool = field(default=True, init=False)

    @property
    def strictly(self) -> bool:
        return self.eps0 > FEAS_TOL


@dataclass
class Outside:
    """Link prices under which the sessions' cheapest trees cost more than
    the priced capacity: sum_s lam_s * mincost_s(w) > sum_e w_e c_e."""

    prices: np.ndarray
    demand_cost: float
    capacity_cost: float
    eps0: float
    inside: bool = field(default=False, init=False)


def _catalog(net: Network, sessions: Sequence[Session], max_nodes: int):
    return [enumerate_trees(net, s.source, s.receivers, max_nodes) for s in sessions]


def _incidence(net: Network, catalog) -> tuple[np.ndarray, list[tuple[int, int]]]:
    cols = [(s, j) for s, trees in enumerate(catalog) for j in range(len(trees))]
    a = np.zeros((net.num_links, len(cols)))
    for c, (s, j) in enumerate(cols):
        a[list(catalog[s][j].edges), c] = 1.0
    return a, cols


def membership(net: Network, sessions: Sequence[Session], rates: Sequence[float] | None = None,
               max_nodes: int = 8) -> Inside | Outside:
    """Largest uniform capacity slack eps0 achievable at the given rates.

    Inside (with an allocation) when eps0 >= -1e-9, otherwise Outside with the
    LP dual link prices as certificate.
    """
    rates = tuple(float(s.rate) for s in sessions) if rates is None else tuple(map(float, rates))
    if len(rates) != len(sessions):
        raise RegionError("one rate per session")
    catalog = _catalog(net, sessions, max_nodes)
    a, cols = _incidence(net, catalog)
    nt = len(cols)
    lam_col = np.array([rates[s] for s, _ in cols])
    # variables: alpha_t (nt), eps0; maximize eps0
    c = np.zeros(nt + 1)
    c[-1] = -1.0
    a_ub = np.hstack([a * lam_col, np.ones((net.num_links, 1))])
    b_ub = net.capacities.copy()
    a_eq = np.zeros((len(sessions), nt + 1))
    for i, (s, _) in enumerate(cols):
        a_eq[s, i] = 1.0
    b_eq = np.ones(len(sessions))
    bounds = [(0, None)] * nt + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise RegionError(f"LP failed: {res.message}")
    eps0 = float(res.x[-1])
    if eps0 >= -FEAS_TOL:
        alloc = TreeRateAllocation(
            trees=[[(t, 0.0) for t in trees] for trees in catalog], rates=rates, eps0=max(eps0, 0.0))
        for i, (s, j) in enumerate(cols):
            alloc.trees[s][j] = (catalog[s][j], max(float(res.x[i]), 0.0))
        return Inside(max(eps0, 0.0), alloc)
    prices = np.maximum(-np.asarray(res.ineqlin.marginals, dtype=float), 0.0)
    demand = sum(lam * min(tree_cost(t, prices) for t in trees) for lam, trees in zip(rates, catalog))
    return Outside(prices, float(demand), float(prices @ net.capacities), eps0)


def max_uniform_rate(net: Network, sessions: Sequence[Session],
                     profile: Sequence[float] | None = None, max_nodes: int = 8,
                     return_allocation: bool = False):
    """Largest multiplier m with m * profile inside the region (one LP).

    ``profile`` defaults to one unit per session.
    """
    profile = np.ones(len(sessions)) if profile is None else np.asarray(profile, dtype=float)
    if profile.shape != (len(sessions),) or (profile < 0).any() or not profile.any():
        raise RegionError("profile needs one nonnegative entry per session, not all zero")
    catalog = _catalog(net, sessions, max_nodes)
    a, cols = _incidence(net, catalog)
    nt = len(cols)
    # variables: tree flows y_t (nt), m; maximize m
    c = np.zeros(nt + 1)
    c[-1] = -1.0
    a_ub = np.hstack([a, np.zeros((net.num_links, 1))])
    a_eq = np.zeros((len(sessions), nt + 1))
    for i, (s, _) in enumerate(cols):
        a_eq[s, i] = 1.0
    a_eq[:, -1] = -profile
    res = linprog(c, A_ub=a_ub, b_ub=net.capacities, A_eq=a_eq, b_eq=np.zeros(len(sessions)),
                  bounds=[(0, None)] * (nt + 1), method="highs")
    if res.status != 0:
        raise RegionError(f"LP failed: {res.message}")
    m = float(res.x[-1])
    if not return_allocation:
        return m
    rates = tuple(float(m * p) for p in profile)
    alloc = TreeRateAllocation([[] for _ in sessions], rates, 0.0)
    for i, (s, j) in enumerate(cols):
        y = max(float(res.x[i]), 0.0)
        alloc.trees[s].append((catalog[s][j], y / rates[s] if rates[s] > 0 else 0.0))
    for s, rate in enumerate(rates):
        # a zero-rate session still needs a convex split; park it on its first tree
        if rate <= 0 and alloc.trees[s]:
            alloc.trees[s][0] = (alloc.trees[s][0][0], 1.0)
    return m, alloc
