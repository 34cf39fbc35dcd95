"""Directed capacitated networks, sessions and scenario parameters."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# A 256 KB chunk is 256 * 8 * 1000 bits.
DEFAULT_CHUNK_BYTES = 256_000
DEFAULT_SLOT_SECONDS = 1.0


class TopologyError(ValueError):
    """Malformed topology text or an invariant violation."""


@dataclass(frozen=True)
class Link:
    id: int
    tail: int
    head: int
    capacity: float


@dataclass(frozen=True)
class Network:
    """Directed graph with per-link capacities in chunks per slot.

    Node ids are dense integers; ``labels`` keeps the names used in the source
    file so that sessions and output can refer to them.
    """

    num_nodes: int
    links: tuple[Link, ...]
    labels: tuple[str, ...] = ()
    out_links: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    in_links: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    capacities: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(v) for v in range(self.num_nodes)))
        if len(self.labels) != self.num_nodes:
            raise TopologyError("label count does not match node count")
        if len(set(self.labels)) != self.num_nodes:
            raise TopologyError("duplicate node labels")
        out: list[list[int]] = [[] for _ in range(self.num_nodes)]
        inc: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for i, link in enumerate(self.links):
            if link.id != i:
                raise TopologyError(f"link ids must be dense and ordered; got {link.id} at {i}")
            if not (0 <= link.tail < self.num_nodes and 0 <= link.head < self.num_nodes):
                raise TopologyError(f"link {i} references an unknown node")
            if link.tail == link.head:
                raise TopologyError(f"link {i} is a self-loop")
            if not (link.capacity > 0 and math.isfinite(link.capacity)):
                raise TopologyError(f"link {i} has capacity {link.capacity!r}; must be > 0")
            out[link.tail].append(i)
            inc[link.head].append(i)
        object.__setattr__(self, "out_links", tuple(tuple(x) for x in out))
        object.__setattr__(self, "in_links", tuple(tuple(x) for x in inc))
        caps = np.array([link.capacity for link in self.links], dtype=float)
        caps.setflags(write=False)
        object.__setattr__(self, "capacities", caps)

    @property
    def num_links(self) -> int:
        return len(self.links)

    def node(self, label: str | int) -> int:
        """Node id for a file label."""
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise TopologyError(f"unknown node {label!r}") from None

    def reachable_from(self, source: int) -> set[int]:
        seen = {source}
        todo = deque([source])
        while todo:
            u = todo.popleft()
            for e in self.out_links[u]:
                v = self.links[e].head
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        return seen


@dataclass(frozen=True)
class ArrivalSpec:
    kind: str = "poisson"  # "deterministic" | "poisson"
    mean: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("deterministic", "poisson"):
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if not (self.mean >= 0 and math.isfinite(self.mean)):
            raise ValueError("arrival mean must be finite and >= 0")


@dataclass(frozen=True)
class Session:
    id: int
    source: int
    receivers: tuple[int, ...]
    arrivals: ArrivalSpec = ArrivalSpec()

    def __post_init__(self) -> None:
        recv = tuple(sorted(set(self.receivers)))
        if not recv:
            raise ValueError("session needs at least one receiver")
        if self.source in recv:
            raise ValueError("source cannot be one of its own receivers")
        object.__setattr__(self, "receivers", recv)

    @property
    def rate(self) -> float:
        return self.arrivals.mean

    def with_rate(self, rate: float) -> "Session":
        return Session(self.id, self.source, self.receivers, ArrivalSpec(self.arrivals.kind, rate))


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs; rates and capacities are in chunks per slot."""

    network: Network
    sessions: tuple[Session, ...]
    algorithm: str = "alg1"  # "alg1" | "alg2"
    eps1: float = 1.0
    eps2: float = 0.05
    gamma: float = 1.0
    delta: float = 0.1
    selector: str = "exact"  # "exact" | "approx" | "random"
    approx_level: int = 2
    strict: bool = False
    slots: int = 10_000
    seed: int = 0
    chunk_bytes: int = DEFAULT_CHUNK_BYTES
    slot_seconds: float = DEFAULT_SLOT_SECONDS
    control_delay: int = 0
    record_hops: bool = False
    exact_max_receivers: int = 12

    def __post_init__(self) -> None:
        if self.algorithm not in ("alg1", "alg2"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.selector not in ("exact", "approx", "random"):
            raise ValueError(f"unknown selector {self.selector!r}")
        if not self.eps1 > 0:
            raise ValueError("eps1 must be > 0")
        if not self.eps2 > 0:
            raise ValueError("eps2 must be > 0")
        if not self.gamma >= 1:
            raise ValueError("gamma must be >= 1")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.slots < 0 or self.control_delay < 0:
            raise ValueError("slots and control_delay must be >= 0")
        if self.approx_level < 1:
            raise ValueError("approx_level must be >= 1")
        if not self.sessions:
            raise ValueError("scenario needs at least one session")
        ids = [s.id for s in self.sessions]
        if ids != list(range(len(ids))):
            raise ValueError("session ids must be 0..n-1 in order")

    @property
    def total_rate(self) -> float:
        return float(sum(s.rate for s in self.sessions))


def mbps_to_chunks(mbps: float, chunk_bytes: int = DEFAULT_CHUNK_BYTES,
                   slot_seconds: float = DEFAULT_SLOT_SECONDS) -> float:
    return mbps * 1e6 * slot_seconds / (chunk_bytes * 8)


def parse_topology(text: str, capacity_scale: float = 1.0) -> Network:
    """Parse ``tail head capacity`` lines; '#' starts a comment.

    Node ids are handed out in order of first appearance. ``capacity_scale``
    multiplies every capacity (unit conversion happens here, once).
    """
    labels: dict[str, int] = {}
    links: list[Link] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TopologyError(f"line {lineno}: expected 'tail head capacity', got {raw!r}")
        tail, head, cap_text = parts
        try:
            cap = float(cap_text) * capacity_scale
        except ValueError:
            raise TopologyError(f"line {lineno}: bad capacity {cap_text!r}") from None
        if not (cap > 0 and math.isfinite(cap)):
            raise TopologyError(f"line {lineno}: capacity must be > 0, got {cap_text}")
        if tail == head:
            raise TopologyError(f"line {lineno}: self-loop at {tail}")
        ids = []
        for label in (tail, head):
            if label not in labels:
                labels[label] = len(labels)
            ids.append(labels[label])
        links.append(Link(len(links), ids[0], ids[1], cap))
    return Network(len(labels), tuple(links), tuple(labels))


def load_topology(path, capacity_scale: float = 1.0) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_topology(fh.read(), capacity_scale)


def dump_topology(net: Network) -> str:
    lines = [f"{net.labels[l.tail]} {net.labels[l.head]} {l.capacity!r}" for l in net.links]
    return "\n".join(lines) + ("\n" if lines else "")


def validate_session(net: Network, session: Session) -> list[int]:
    """Receivers that cannot be reached from the source; empty means ok."""
    if not 0 <= session.source < net.num_nodes:
        raise TopologyError(f"session {session.id}: unknown source {session.source}")
    reach = net.reachable_from(session.source)
    return [v for v in session.receivers if v not in reach]


def multi_source_transform(net: Network, sources: Iterable[int], label: str = "virtual") -> Network:
    """Add a virtual super-source feeding every node in ``sources``.

    The new links carry capacity ``sum(c_e) + 1``, which no feasible flow can
    saturate.
    """
    sources = sorted(set(sources))
    if not sources:
        raise TopologyError("need at least one source")
    for s in sources:
        if not 0 <= s < net.num_nodes:
            raise TopologyError(f"unknown source {s}")
    big = float(net.capacities.sum()) + 1.0
    while label in net.labels:
        label += "'"
    v = net.num_nodes
    extra = [Link(net.num_links + i, v, s, big) for i, s in enumerate(sources)]
    return Network(v + 1, net.links + tuple(extra), net.labels + (label,))


def from_edges(edges: Sequence[tuple], labels: Sequence[str] | None = None) -> Network:
    """Build a network from ``(tail, head, capacity)`` triples over ids 0..n-1."""
    n = 1 + max((max(t, h) for t, h, _ in edges), default=-1)
    if labels is not None:
        n = max(n, len(labels))
    links = tuple(Link(i, int(t), int(h), float(c)) for i, (t, h, c) in enumerate(edges))
    return Network(n, links, tuple(labels) if labels else ())


def complete_digraph(n: int, capacity: float = 1.0, first_label: int = 1) -> Network:
    """Complete digraph on ``n`` nodes labelled ``first_label...``, links in (tail, head) order."""
    edges = [(u, v, capacity) for u in range(n) for v in range(n) if u != v]
    return from_edges(edges, [str(first_label + i) for i in range(n)])


def toy_k4() -> tuple[Network, Session]:
    """Unit-capacity K4 with source 1 and receivers {2, 3}; node 4 is a helper."""
    net = complete_digraph(4)
    return net, Session(0, net.node("1"), (net.node("2"), net.node("3")))
