"""INI-style scenario files.

    [network]
    file = k4.txt              # edge list, relative to this config
    units = chunks             # chunks (per slot) | mbps

    [session video]            # one section per session, in file order
    source = 1
    receivers = 2 3
    rate = 2.7
    arrivals = poisson         # poisson | deterministic

    [algorithm]
    name = alg1                # alg1 | alg2
    selector = exact           # exact | approx (alg1); alg2 always samples
    gamma = 1.0
    eps1 = 1.0
    eps2 = 0.05
    delta = 0.1
    control_delay = 0
    approx_level = 2
    strict = false

    [run]
    slots = 10000
    seed = 0
    chunk_bytes = 256000
    slot_seconds = 1.0
    record_hops = false
    min_slots = 10000

Rates, capacities, eps1 and eps2 are read in ``units`` and converted to
chunks per slot.
"""

from __future__ import annotations

import configparser
from dataclasses import replace
from pathlib import Path

from .topology import (DEFAULT_CHUNK_BYTES, ArrivalSpec, Scenario, Session, TopologyError,
                       load_topology, mbps_to_chunks)

KEYS = {
    "network": ("file", "units"),
    "session *": ("source", "receivers", "rate", "arrivals"),
    "algorithm": ("name", "selector", "gamma", "eps1", "eps2", "delta", "control_delay",
                  "approx_level", "strict"),
    "run": ("slots", "seed", "chunk_bytes", "slot_seconds", "record_hops", "min_slots"),
}


class ConfigError(ValueError):
    pass


def _split_nodes(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def load_config(path, overrides: dict | None = None) -> tuple[Scenario, dict]:
    """Parse a scenario file; returns the scenario and extra run options.

    Raises ConfigError for bad syntax or values and TopologyError for a
    missing or malformed network file.
    """
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    for section in cp.sections():
        allowed = KEYS["session *"] if section.startswith("session") else KEYS.get(section)
        if allowed is None:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    try:
        run = cp["run"] if cp.has_section("run") else {}
        alg = cp["algorithm"] if cp.has_section("algorithm") else {}
        chunk_bytes = int(run.get("chunk_bytes", DEFAULT_CHUNK_BYTES))
        slot_seconds = float(run.get("slot_seconds", 1.0))
        if not cp.has_section("network") or "file" not in cp["network"]:
            raise ConfigError("[network] file is required")
        units = cp["network"].get("units", "chunks")
        if units == "chunks":
            scale = 1.0
        elif units == "mbps":
            scale = mbps_to_chunks(1.0, chunk_bytes, slot_seconds)
        else:
            raise ConfigError(f"units must be 'chunks' or 'mbps', got {units!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None

    net_path = Path(cp["network"]["file"])
    if not net_path.is_absolute():
        net_path = path.parent / net_path
    try:
        net = load_topology(net_path, scale)
    except OSError as exc:
        raise TopologyError(f"cannot read topology {net_path}: {exc}") from None

    try:
        sessions = []
        for section in cp.sections():
            if not section.startswith("session"):
                continue
            sec = cp[section]
            sessions.append(Session(
                len(sessions), net.node(sec["source"]),
                tuple(net.node(v) for v in _split_nodes(sec["receivers"])),
                ArrivalSpec(sec.get("arrivals", "poisson"), float(sec.get("rate", "0")) * scale)))
        if not sessions:
            raise ConfigError("at least one [session ...] section is required")
        scenario = Scenario(
            network=net, sessions=tuple(sessions),
            algorithm=overrides.get("algorithm", alg.get("name", "alg1")),
            selector=overrides.get("selector", alg.get("selector", "exact")),
            gamma=float(overrides.get("gamma", alg.get("gamma", 1.0))),
            eps1=float(overrides.get("eps1", float(alg.get("eps1", 1.0)) * scale)),
            eps2=float(overrides.get("eps2", float(alg.get("eps2", 0.05)) * scale)),
            delta=float(overrides.get("delta", alg.get("delta", 0.1))),
            control_delay=int(overrides.get("control_delay", alg.get("control_delay", 0))),
            approx_level=int(alg.get("approx_level", 2)),
            strict=_bool(alg.get("strict", "false")),
            slots=int(overrides.get("slots", run.get("slots", 10_000))),
            seed=int(overrides.get("seed", run.get("seed", 0))),
            chunk_bytes=chunk_bytes, slot_seconds=slot_seconds,
            record_hops=_bool(run.get("record_hops", "false")),
        )
        options = {"min_slots": int(run.get("min_slots", 10_000))}
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    except TopologyError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return scenario, options


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def scale_rates(scenario: Scenario, factor: float) -> Scenario:
    return replace(scenario, sessions=tuple(s.with_rate(s.rate * factor) for s in scenario.sessions))
