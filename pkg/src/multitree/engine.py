"""Slotted execution: arrivals, scheduler, hop-priority fluid data plane, logging."""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import alg1, alg2
from .fluid import QUANTUM, to_quanta
from .metrics import MetricsLog
from .steiner import Tree, UnreachableReceiverError
from .topology import ArrivalSpec, Network, Scenario, validate_session


class ArrivalProcess:
    """A_s(k) for one session.

    Deterministic arrivals round the running total, so the count over the
    first k slots is floor(k * lam) and the long-run mean is exactly lam.
    """

    def __init__(self, spec: ArrivalSpec, rng=None):
        self.spec = spec
        self.rng = rng
        self._exact = Fraction(repr(float(spec.mean)))
        self._sent = 0
        self._k = 0

    def draw(self) -> int:
        self._k += 1
        if self.spec.kind == "deterministic":
            total = int(self._exact * self._k)  # floor for nonnegative
            a, self._sent = total - self._sent, total
            return a
        if self.spec.mean == 0:
            return 0
        return int(self.rng.poisson(self.spec.mean))


def draw_arrivals(proc: ArrivalProcess) -> int:
    return proc.draw()


@dataclass(frozen=True)
class TreePlan:
    """Forwarding table of one (session, tree): who is fed by each tree link."""

    session: int
    tree: Tree
    root_links: tuple[int, ...]
    head: dict[int, int]
    children: dict[int, tuple[int, ...]]  # node -> outgoing tree links
    delivers: frozenset[int]  # tree nodes that are receivers of the session
    downstream: dict[int, int]  # link -> receivers at or below its head
    depth: int


def make_plan(net: Network, session: int, receivers: Sequence[int], tree: Tree) -> TreePlan:
    children: dict[int, list[int]] = {}
    head = {}
    for e in tree.edges:
        link = net.links[e]
        children.setdefault(link.tail, []).append(e)
        head[e] = link.head
    recv = set(receivers)
    downstream: dict[int, int] = {}
    depth = 0

    def walk(e: int, d: int) -> int:
        nonlocal depth
        depth = max(depth, d)
        v = head[e]
        n = int(v in recv) + sum(walk(f, d + 1) for f in children.get(v, ()))
        downstream[e] = n
        return n

    roots = tuple(children.get(tree.source, ()))
    for e in roots:
        walk(e, 1)
    delivers = frozenset(v for v in head.values() if v in recv)
    return TreePlan(session, tree, roots, head, {k: tuple(v) for k, v in children.items()},
                    delivers, downstream, depth)


class RealQueues:
    """Per-link fluid backlogs split by hop class, served with strict hop priority.

    Each (link, hop class) keeps parcels grouped by injection slot and served
    oldest first; a partially served group is split across its trees in
    proportion to their amounts. Served fluid joins the child links of its
    tree at the next hop class on the following slot.
    """

    def __init__(self, net: Network, receivers: Sequence[tuple[int, int]]):
        self.net = net
        self.cap = [to_quanta(c) for c in net.capacities]
        self.max_hops = max(1, net.num_nodes - 1)
        E = net.num_links
        self.classes: list[dict[int, tuple[list[int], dict[int, dict[int, int]]]]] = [{} for _ in range(E)]
        self.totals = [[0] * self.max_hops for _ in range(E)]
        self.link_total = [0] * E
        self.arrived = [[0] * self.max_hops for _ in range(E)]
        self.pending: list[tuple[int, int, int, int, int]] = []
        self.plans: list[TreePlan] = []
        self._plan_ids: dict[tuple[int, Tree], int] = {}
        self.recv_index = {pair: i for i, pair in enumerate(receivers)}
        self.delivered = [0] * len(receivers)
        self.injected: list[int] = []
        self.delivered_by_tree: list[int] = []

    def intern(self, session: int, receivers: Sequence[int], tree: Tree) -> int:
        key = (session, tree)
        tid = self._plan_ids.get(key)
        if tid is None:
            plan = make_plan(self.net, session, receivers, tree)
            if plan.depth > self.max_hops:
                raise ValueError("tree deeper than |V|-1")
            tid = len(self.plans)
            self.plans.append(plan)
            self._plan_ids[key] = tid
            self.injected.append(0)
            self.delivered_by_tree.append(0)
        return tid

    def _add(self, e: int, h: int, slot: int, tid: int, amount: int) -> None:
        cls = self.classes[e].get(h)
        if cls is None:
            cls = self.classes[e][h] = ([], {})
        heap, groups = cls
        grp = groups.get(slot)
        if grp is None:
            grp = groups[slot] = {}
            heapq.heappush(heap, slot)
        grp[tid] = grp.get(tid, 0) + amount
        self.totals[e][h - 1] += amount
        self.link_total[e] += amount
        self.arrived[e][h - 1] += amount

    def inject(self, tid: int, amount: int, slot: int) -> None:
        """Enqueue ``amount`` quanta at hop class 1 on every root link of the tree."""
        if amount < 0:
            raise ValueError("amount must be >= 0")
        if amount == 0:
            return
        self.injected[tid] += amount
        for e in self.plans[tid].root_links:
            self._add(e, 1, slot, tid, amount)

    def forward_step(self) -> list[int]:
        """Serve one slot. Returns per-(session, receiver) deliveries in quanta."""
        for e, h, slot, tid, amount in self.pending:
            self._add(e, h, slot, tid, amount)
        self.pending = []
        delivered = [0] * len(self.delivered)
        for e, classes in enumerate(self.classes):
            if not self.link_total[e]:
                continue
            budget = self.cap[e]
            for h in sorted(classes):
                heap, groups = classes[h]
                while budget and heap:
                    slot = heap[0]
                    grp = groups[slot]
                    gt = sum(grp.values())
                    if gt <= budget:
                        heapq.heappop(heap)
                        del groups[slot]
                        served = grp
                        budget -= gt
                    else:
                        served = _split(grp, budget, gt)
                        for tid, a in served.items():
                            grp[tid] -= a
                        gt = budget
                        budget = 0
                    self.totals[e][h - 1] -= gt
                    self.link_total[e] -= gt
                    for tid, a in served.items():
                        if a:
                            self._emit(e, h, slot, tid, a, delivered)
                if not heap:
                    del classes[h]
                if not budget:
                    break
        for i, d in enumerate(delivered):
            self.delivered[i] += d
        return delivered

    def _emit(self, e: int, h: int, slot: int, tid: int, amount: int, delivered: list[int]) -> None:
        plan = self.plans[tid]
        v = plan.head[e]
        if v in plan.delivers:
            delivered[self.recv_index[(plan.session, v)]] += amount
            self.delivered_by_tree[tid] += amount
        for f in plan.children.get(v, ()):
            self.pending.append((f, h + 1, slot, tid, amount))

    def take_arrivals(self) -> list[list[int]]:
        out = self.arrived
        self.arrived = [[0] * self.max_hops for _ in range(len(out))]
        return out

    def in_flight(self, tid: int) -> int:
        """Backlog of one tree weighted by the receivers each parcel still owes."""
        down = self.plans[tid].downstream
        total = 0
        for e, classes in enumerate(self.classes):
            for heap, groups in classes.values():
                for grp in groups.values():
                    total += grp.get(tid, 0) * down.get(e, 0)
        for e, _h, _slot, t, a in self.pending:
            if t == tid:
                total += a * down[e]
        return total

    def balance(self, tid: int, n_receivers: int) -> int:
        """Injected x receivers minus (delivered + owed); zero when fluid is conserved."""
        return self.injected[tid] * n_receivers - self.delivered_by_tree[tid] - self.in_flight(tid)


def _split(grp: dict[int, int], budget: int, total: int) -> dict[int, int]:
    """Proportional integer split of ``budget`` over the parcels of a group."""
    served = {tid: a * budget // total for tid, a in grp.items()}
    rem = budget - sum(served.values())
    for tid in sorted(grp):
        if not rem:
            break
        if served[tid] < grp[tid]:
            served[tid] += 1
            rem -= 1
    return served


def inject_real(rq: RealQueues, tid: int, amount: int, slot: int = 0) -> RealQueues:
    rq.inject(tid, amount, slot)
    return rq


def forward_step(rq: RealQueues) -> list[int]:
    return rq.forward_step()


def scenario_hash(scenario: Scenario) -> str:
    d = asdict(scenario)
    net = scenario.network
    d["network"] = {"labels": list(net.labels),
                    "links": [[l.tail, l.head, repr(l.capacity)] for l in net.links]}
    blob = json.dumps(d, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def validate_scenario(scenario: Scenario) -> None:
    net = scenario.network
    for sess in scenario.sessions:
        bad = validate_session(net, sess)
        if bad:
            raise UnreachableReceiverError(bad)
    if scenario.algorithm == "alg1" and scenario.selector not in ("exact", "approx"):
        raise alg2.ConfigurationError("alg1 needs selector 'exact' or 'approx'")
    if scenario.algorithm == "alg2":
        alg2.check_eps2(net.capacities, scenario.eps2)


def run(scenario: Scenario, measure: bool = True, check_conservation: bool = False) -> MetricsLog:
    """Execute ``scenario.slots`` slots; identical scenario and seed give identical logs.

    ``measure`` computes the exact minimum tree cost every slot when the
    selection itself does not (alg2 candidate tracking).
    """
    validate_scenario(scenario)
    net = scenario.network
    sessions = scenario.sessions
    S = len(sessions)
    K = scenario.slots
    receivers = [(s.id, v) for s in sessions for v in s.receivers]
    seeds = np.random.SeedSequence(scenario.seed).spawn(2 * S)
    procs = [ArrivalProcess(s.arrivals, np.random.default_rng(seeds[i])) for i, s in enumerate(sessions)]
    pick_rngs = [np.random.default_rng(seeds[S + i]) for i in range(S)]
    rq = RealQueues(net, receivers)
    log = MetricsLog.allocate(K, net.num_links, S, receivers, net.capacities,
                              [s.rate for s in sessions], rq.max_hops if scenario.record_hops else None)
    if scenario.algorithm == "alg1":
        state = alg1.Alg1State.initial(net, S, scenario.control_delay)
    else:
        state = alg2.Alg2State.initial(net, sessions, scenario.control_delay)

    for k in range(K):
        arrivals = [p.draw() for p in procs]
        if scenario.algorithm == "alg1":
            out = alg1.alg1_slot(state, arrivals, net, scenario)
            log.regulator[k] = [p / QUANTUM for p in state.p]
        else:
            out = alg2.alg2_slot(state, arrivals, net, scenario, pick_rngs, measure)
            log.candidate_min[k] = out.candidate_min
            log.compare_violations += out.compare_violations
        for s, sess in enumerate(sessions):
            tid = rq.intern(s, sess.receivers, out.trees[s])
            rq.inject(tid, out.release[s], k)
            log.tree_id[k, s] = tid
        delivered = rq.forward_step()
        x = rq.take_arrivals()
        log.q[k] = state.q
        log.virtual_in[k] = out.virtual_in
        log.arrivals[k] = arrivals
        log.released[k] = [d / QUANTUM for d in out.release]
        log.tree_cost[k] = out.costs
        log.min_cost[k] = out.min_costs
        log.delivered[k] = [d / QUANTUM for d in delivered]
        log.backlog[k] = [t / QUANTUM for t in rq.link_total]
        log.link_arrivals[k] = [sum(r) / QUANTUM for r in x]
        if log.hop_arrivals is not None:
            log.hop_arrivals[k] = x
            log.hop_backlog[k] = rq.totals
        if check_conservation:
            for tid, plan in enumerate(rq.plans):
                n = len(sessions[plan.session].receivers)
                if rq.balance(tid, n) != 0:
                    raise AssertionError(f"fluid not conserved on tree {tid} at slot {k}")

    log.trees = [(p.session, p.tree.edges) for p in rq.plans]
    log.meta = {
        "scenario_hash": scenario_hash(scenario),
        "seed": scenario.seed,
        "algorithm": scenario.algorithm,
        "selector": scenario.selector,
        "labels": list(net.labels),
        "deviations": [
            "control packets do not consume data-plane capacity",
        ],
        "arrivals_satisfy_zero_probability_condition": all(
            s.arrivals.kind == "poisson" or s.rate == 0 for s in sessions),
        "pick_condition_exact": all(len(s.receivers) <= scenario.exact_max_receivers for s in sessions),
    }
    return log
