"""Multi-tree multicast scheduling with virtual-queue signaling."""

from .engine import run
from .metrics import MetricsLog, classify, control_overhead, loynes_oracle
from .rate_region import max_uniform_rate, membership
from .steiner import Tree, approx_min_tree, enumerate_trees, exact_min_tree
from .topology import Network, Scenario, Session, parse_topology, toy_k4

__version__ = "0.1.0"

__all__ = [
    "Network", "Scenario", "Session", "Tree", "MetricsLog", "run", "classify",
    "control_overhead", "loynes_oracle", "max_uniform_rate", "membership",
    "approx_min_tree", "enumerate_trees", "exact_min_tree", "parse_topology", "toy_k4",
]
