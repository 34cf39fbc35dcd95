"""Directed Steiner trees rooted at a session source.

Four producers share one output type: exhaustive enumeration (tiny graphs),
an exact subset dynamic program, the bounded-level greedy approximation of
Charikar et al., and a cost-biased randomized sampler.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .topology import Network

INF = math.inf


class SteinerError(ValueError):
    pass


class UnreachableReceiverError(SteinerError):
    def __init__(self, receivers: Sequence[int]):
        self.receivers = list(receivers)
        super().__init__(f"receivers not reachable from source: {self.receivers}")


class InstanceTooLargeError(SteinerError):
    pass


class InvalidTreeError(SteinerError):
    pass


@dataclass(frozen=True)
class Tree:
    """Out-arborescence given by its source and sorted link ids."""

    source: int
    edges: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))

    def __contains__(self, link: int) -> bool:
        return link in self.edges

    def cost(self, q) -> float:
        return tree_cost(self, q)

    def key(self) -> str:
        return ";".join(map(str, self.edges))


def tree_cost(tree: Tree, q) -> float:
    """Sum of link costs over the tree."""
    total = 0.0
    for e in tree.edges:
        total += q[e]
    return float(total)


def _as_list(q, net: Network) -> list[float]:
    if q is None:
        return [0.0] * net.num_links
    out = [float(x) for x in q]
    if len(out) != net.num_links:
        raise SteinerError(f"cost vector has {len(out)} entries for {net.num_links} links")
    if any(x < 0 or x != x for x in out):
        raise SteinerError("link costs must be nonnegative")
    return out


def _check_reachable(net: Network, source: int, receivers: Sequence[int]) -> None:
    reach = net.reachable_from(source)
    missing = [v for v in receivers if v not in reach]
    if missing:
        raise UnreachableReceiverError(missing)


def check_tree(net: Network, tree: Tree, receivers: Iterable[int]) -> None:
    """Raise InvalidTreeError unless ``tree`` is a minimal out-arborescence
    from its source covering ``receivers``."""
    receivers = set(receivers)
    parent: dict[int, int] = {}
    children: dict[int, list[int]] = {}
    for e in tree.edges:
        if not 0 <= e < net.num_links:
            raise InvalidTreeError(f"unknown link {e}")
        link = net.links[e]
        if link.head == tree.source:
            raise InvalidTreeError("tree edge enters the root")
        if link.head in parent:
            raise InvalidTreeError(f"node {link.head} has two incoming tree edges")
        parent[link.head] = e
        children.setdefault(link.tail, []).append(link.head)
    reached = {tree.source}
    todo = deque([tree.source])
    while todo:
        u = todo.popleft()
        for v in children.get(u, ()):
            reached.add(v)
            todo.append(v)
    if len(reached) != len(parent) + 1:
        raise InvalidTreeError("tree edges not all connected to the root (cycle or detached part)")
    missing = receivers - reached
    if missing:
        raise InvalidTreeError(f"receivers not covered: {sorted(missing)}")
    for v in reached:
        if v != tree.source and v not in children and v not in receivers:
            raise InvalidTreeError(f"dangling branch ends at non-receiver {v}")


def is_valid_tree(net: Network, tree: Tree, receivers: Iterable[int]) -> bool:
    try:
        check_tree(net, tree, receivers)
    except InvalidTreeError:
        return False
    return True


def arborescence_within(net: Network, source: int, receivers: Iterable[int],
                        links: Iterable[int]) -> Tree:
    """Breadth-first arborescence inside ``links``, pruned to the receivers.

    Its cost never exceeds the cost of ``links`` when costs are nonnegative.
    """
    receivers = set(receivers)
    allowed = set(links)
    parent: dict[int, int] = {}
    seen = {source}
    todo = deque([source])
    while todo:
        u = todo.popleft()
        for e in net.out_links[u]:
            if e in allowed:
                v = net.links[e].head
                if v not in seen:
                    seen.add(v)
                    parent[v] = e
                    todo.append(v)
    missing = receivers - seen
    if missing:
        raise SteinerError(f"link set does not reach {sorted(missing)}")
    keep: set[int] = set()
    for v in receivers:
        while v != source and parent[v] not in keep:
            e = parent[v]
            keep.add(e)
            v = net.links[e].tail
    return Tree(source, tuple(keep))


def bfs_tree(net: Network, source: int, receivers: Sequence[int]) -> Tree:
    """Fewest-hop tree (first discovered parent wins)."""
    _check_reachable(net, source, receivers)
    return arborescence_within(net, source, receivers, range(net.num_links))


# --------------------------------------------------------------------------
# enumeration


def enumerate_trees(net: Network, source: int, receivers: Sequence[int],
                    max_nodes: int = 8) -> list[Tree]:
    """Every minimal Steiner out-arborescence, over all helper-node subsets.

    Grows rooted subtrees by branching on the first frontier link (take it or
    drop it), which visits each rooted subtree once.
    """
    if net.num_nodes > max_nodes:
        raise InstanceTooLargeError(
            f"enumeration limited to {max_nodes} nodes; network has {net.num_nodes}")
    receivers = sorted(set(receivers))
    _check_reachable(net, source, receivers)
    recv = set(receivers)
    links = net.links
    in_tree = [False] * net.num_nodes
    in_tree[source] = True
    chosen: list[int] = []
    n_children = [0] * net.num_nodes
    covered = [0]
    out: list[Tree] = []

    def emit() -> None:
        # every non-root leaf must be a receiver
        for e in chosen:
            v = links[e].head
            if n_children[v] == 0 and v not in recv:
                return
        out.append(Tree(source, tuple(chosen)))

    def rec(frontier: list[int]) -> None:
        if covered[0] == len(recv):
            # anything added now would dangle
            emit()
            return
        i = 0
        while i < len(frontier) and in_tree[links[frontier[i]].head]:
            i += 1
        if i == len(frontier):
            return
        e = frontier[i]
        rest = frontier[i + 1:]
        u, v = links[e].tail, links[e].head
        in_tree[v] = True
        chosen.append(e)
        n_children[u] += 1
        covered[0] += v in recv
        rec(rest + list(net.out_links[v]))
        covered[0] -= v in recv
        n_children[u] -= 1
        chosen.pop()
        in_tree[v] = False
        rec(rest)

    rec(list(net.out_links[source]))
    out.sort(key=lambda t: t.edges)
    return out


# --------------------------------------------------------------------------
# exact


def exact_min_tree(net: Network, source: int, receivers: Sequence[int], q=None,
                   max_receivers: int = 12) -> Tree:
    """Minimum-cost Steiner arborescence by a subset dynamic program.

    ``best[S][v]`` is the cheapest structure rooted at ``v`` reaching every
    receiver in ``S``; it is either a merge of two parts at ``v`` or a link
    out of ``v`` followed by ``best[S][w]`` (a Dijkstra pass per subset).
    Deterministic: ties keep the first candidate found in id order.
    """
    receivers = sorted(set(receivers))
    if len(receivers) > max_receivers:
        raise InstanceTooLargeError(
            f"exact solver limited to {max_receivers} receivers; got {len(receivers)}")
    _check_reachable(net, source, receivers)
    cost = _as_list(q, net)
    n = net.num_nodes
    links = net.links
    in_links = net.in_links
    r = len(receivers)
    full = (1 << r) - 1
    best: list[list[float]] = [None] * (full + 1)  # type: ignore[list-item]
    back: list[list] = [None] * (full + 1)  # type: ignore[list-item]

    for mask in range(1, full + 1):
        cur = [INF] * n
        bk: list = [None] * n
        low = mask & -mask
        if mask == low:
            t = receivers[low.bit_length() - 1]
            cur[t] = 0.0
            bk[t] = ()
        else:
            rest = mask ^ low
            sub = rest
            # submasks that contain the lowest bit, excluding mask itself
            while True:
                a = sub | low
                if a != mask:
                    ba, bb = best[a], best[mask ^ a]
                    for v in range(n):
                        val = ba[v] + bb[v]
                        if val < cur[v]:
                            cur[v] = val
                            bk[v] = (a,)
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        heap = [(d, v) for v, d in enumerate(cur) if d < INF]
        heapq.heapify(heap)
        done = [False] * n
        while heap:
            d, v = heapq.heappop(heap)
            if done[v] or d > cur[v]:
                continue
            done[v] = True
            for e in in_links[v]:
                u = links[e].tail
                nd = d + cost[e]
                if nd < cur[u]:
                    cur[u] = nd
                    bk[u] = (e, v)
                    heapq.heappush(heap, (nd, u))
        best[mask] = cur
        back[mask] = bk

    used: set[int] = set()
    stack = [(full, source)]
    while stack:
        mask, v = stack.pop()
        step = back[mask][v]
        if len(step) == 1:
            a = step[0]
            stack.append((a, v))
            stack.append((mask ^ a, v))
        elif len(step) == 2:
            e, w = step
            used.add(e)
            stack.append((mask, w))
    return arborescence_within(net, source, receivers, used)


# --------------------------------------------------------------------------
# approximation


def _all_pairs(net: Network, cost: list[float]):
    """Dijkstra from every node: distances and predecessor links."""
    n = net.num_nodes
    dist = []
    pred = []
    for s in range(n):
        d = [INF] * n
        p = [-1] * n
        d[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            du, u = heapq.heappop(heap)
            if du > d[u]:
                continue
            for e in net.out_links[u]:
                v = net.links[e].head
                nd = du + cost[e]
                if nd < d[v]:
                    d[v] = nd
                    p[v] = e
                    heapq.heappush(heap, (nd, v))
        dist.append(d)
        pred.append(p)
    return dist, pred


class _Charikar:
    def __init__(self, net: Network, cost: list[float]):
        self.net = net
        self.dist, self.pred = _all_pairs(net, cost)

    def level1(self, k: int, r: int, terms: Sequence[int]):
        d = self.dist[r]
        order = sorted((d[x], x) for x in terms if d[x] < INF)[:k]
        return sum(c for c, _ in order), [(r, x) for _, x in order], {x for _, x in order}

    def solve(self, level: int, k: int, r: int, terms: Sequence[int]):
        """Returns (closure cost, closure edges, covered terminals)."""
        if level == 1:
            return self.level1(k, r, terms)
        d = self.dist[r]
        remaining = list(terms)
        total = 0.0
        edges: list[tuple[int, int]] = []
        covered: set[int] = set()
        while k > 0 and remaining:
            best = None
            for v in range(self.net.num_nodes):
                if d[v] == INF:
                    continue
                if level == 2:
                    dv = self.dist[v]
                    order = sorted((dv[x], x) for x in remaining if dv[x] < INF)[:k]
                    acc = 0.0
                    for kk, (c, _) in enumerate(order, start=1):
                        acc += c
                        dens = (d[v] + acc) / kk
                        if best is None or dens < best[0]:
                            best = (dens, d[v] + acc, v, [x for _, x in order[:kk]], None)
                else:
                    for kk in range(1, k + 1):
                        c, sub_edges, cov = self.solve(level - 1, kk, v, remaining)
                        if len(cov) < kk:
                            break
                        dens = (d[v] + c) / len(cov)
                        if best is None or dens < best[0]:
                            best = (dens, d[v] + c, v, sorted(cov), sub_edges)
            if best is None:
                break
            _, c, v, cov, sub_edges = best
            if v != r:
                edges.append((r, v))
            edges.extend(sub_edges if sub_edges is not None else [(v, x) for x in cov])
            total += c
            covered.update(cov)
            k -= len(cov)
            cov_set = set(cov)
            remaining = [x for x in remaining if x not in cov_set]
        return total, edges, covered

    def expand(self, closure_edges) -> set[int]:
        used: set[int] = set()
        for a, b in closure_edges:
            p = self.pred[a]
            v = b
            while v != a:
                e = p[v]
                used.add(e)
                v = self.net.links[e].tail
        return used


def approx_min_tree(net: Network, source: int, receivers: Sequence[int], q=None,
                    level: int = 2) -> Tree:
    """Level-``level`` greedy density approximation (Charikar et al.).

    Level 1 joins the receivers by shortest paths; level i repeatedly adds the
    lowest-density combination of a shortest path to some node v and a
    level-(i-1) tree from v, until every receiver is covered.
    """
    if level < 1:
        raise SteinerError("level must be >= 1")
    receivers = sorted(set(receivers))
    _check_reachable(net, source, receivers)
    cost = _as_list(q, net)
    ch = _Charikar(net, cost)
    _, closure, covered = ch.solve(level, len(receivers), source, receivers)
    assert covered == set(receivers)
    return arborescence_within(net, source, receivers, ch.expand(closure))


# --------------------------------------------------------------------------
# randomized


def random_biased_tree(net: Network, source: int, receivers: Sequence[int], q, rng) -> Tree:
    """Grow a tree by repeated breadth-first scans from the source.

    A candidate link (tree node to non-tree node) is admitted with probability
    proportional to 1/(1+q_e), normalized so the cheapest candidate of the
    scan is always admitted. Links that would close a loop are skipped.
    """
    receivers = sorted(set(receivers))
    _check_reachable(net, source, receivers)
    cost = _as_list(q, net)
    links = net.links
    reached = [False] * net.num_nodes
    reached[source] = True
    order = [source]
    parent: dict[int, int] = {}
    need = set(receivers)
    while need:
        best_w = 0.0
        for u in order:
            for e in net.out_links[u]:
                if not reached[links[e].head]:
                    w = 1.0 / (1.0 + cost[e])
                    if w > best_w:
                        best_w = w
        scan = deque(order)
        while scan and need:
            u = scan.popleft()
            for e in net.out_links[u]:
                v = links[e].head
                if reached[v]:
                    continue
                if rng.random() * best_w * (1.0 + cost[e]) < 1.0:
                    reached[v] = True
                    parent[v] = e
                    order.append(v)
                    scan.append(v)
                    need.discard(v)
                    if not need:
                        break
    keep: set[int] = set()
    for v in receivers:
        while v != source and parent[v] not in keep:
            e = parent[v]
            keep.add(e)
            v = links[e].tail
    return Tree(source, tuple(keep))


def sample_random_tree(net: Network, source: int, receivers: Sequence[int], q, rng,
                       delta: float, max_receivers: int = 12, approx_level: int = 2) -> Tree:
    """Pick-stage sampler: with probability ``delta`` the min-cost tree,
    otherwise a cost-biased random tree.

    When the receiver set is too large for the exact solver the injected tree
    comes from ``approx_min_tree`` instead.
    """
    if not 0 < delta <= 1:
        raise SteinerError("delta must lie in (0, 1]")
    if rng.random() < delta:
        if len(set(receivers)) <= max_receivers:
            return exact_min_tree(net, source, receivers, q, max_receivers)
        return approx_min_tree(net, source, receivers, q, approx_level)
    return random_biased_tree(net, source, receivers, q, rng)
