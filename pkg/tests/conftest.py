import itertools
import random
from pathlib import Path

import pytest

from multitree.topology import from_edges

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


def random_digraph(rng: random.Random, max_nodes: int = 7, p: float = 0.45):
    """Random digraph with integer costs 0..9; node 0 reaches everything via a spine."""
    n = rng.randint(3, max_nodes)
    order = list(range(1, n))
    rng.shuffle(order)
    edges = set()
    prev = 0
    for v in order:  # random spanning path out of 0 keeps every node reachable
        edges.add((prev, v))
        prev = v if rng.random() < 0.5 else rng.choice([0] + order[: order.index(v)])
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < p:
                edges.add((u, v))
    edges = sorted(edges)
    net = from_edges([(u, v, 1.0) for u, v in edges])
    costs = [rng.randint(0, 9) for _ in edges]
    receivers = tuple(sorted(rng.sample(range(1, n), rng.randint(1, min(3, n - 1)))))
    return net, receivers, costs


def is_arborescence(net, source, receivers, links) -> bool:
    """Independent validity check for an out-arborescence covering ``receivers``."""
    links = list(links)
    if not links:
        return not receivers
    parent = {}
    for e in links:
        t, h = net.links[e].tail, net.links[e].head
        if h == source or h in parent:
            return False
        parent[h] = t
    nodes = {source} | set(parent)
    if any(net.links[e].tail not in nodes for e in links):
        return False
    for v in parent:  # walk to the root, no cycles
        seen, u = set(), v
        while u != source:
            if u in seen or u not in parent:
                return False
            seen.add(u)
            u = parent[u]
    if not set(receivers) <= nodes:
        return False
    tails = {net.links[e].tail for e in links}
    leaves = [v for v in parent if v not in tails]
    return all(v in receivers for v in leaves)


def subset_trees(net, source, receivers):
    """All valid trees by brute force over link subsets (tiny graphs only)."""
    m = net.num_links
    out = []
    for r in range(1, net.num_nodes):
        for combo in itertools.combinations(range(m), r):
            if is_arborescence(net, source, receivers, combo):
                out.append(combo)
    return out


@pytest.fixture
def configs_dir():
    return CONFIGS


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
