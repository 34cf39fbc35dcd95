"""Command-line entry point.

Exit codes: 0 done (whatever the verdict), 2 config error, 3 topology error,
4 instance too large for an oracle.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import config as cfg
from .engine import run, scenario_hash
from .metrics import MetricsError, classify, export_csv, loynes_check, loynes_check_csv, summarize
from .rate_region import RegionError, max_uniform_rate
from .steiner import InstanceTooLargeError, SteinerError, approx_min_tree, exact_min_tree, tree_cost
from .topology import TopologyError

log = logging.getLogger("multitree")

EXIT_OK, EXIT_CONFIG, EXIT_TOPOLOGY, EXIT_TOO_LARGE = 0, 2, 3, 4

CONFIG_HELP = "config keys:\n" + "\n".join(
    f"  [{section}] {', '.join(keys)}" for section, keys in cfg.KEYS.items())


def _overrides(args) -> dict:
    return {
        "seed": args.seed, "slots": args.slots, "algorithm": args.algorithm,
        "selector": args.selector, "gamma": args.gamma, "eps1": args.eps1, "eps2": args.eps2,
        "delta": args.delta, "control_delay": args.control_delay,
    }


def _run_one(scenario, min_slots: int):
    lg = run(scenario)
    try:
        verdict = classify(lg, min_slots=min_slots)
    except MetricsError:
        verdict = None
    return lg, verdict


def cmd_run(args) -> int:
    scenario, opts = cfg.load_config(args.config, _overrides(args))
    lg, verdict = _run_one(scenario, opts["min_slots"])
    out = Path(args.out)
    prefix = scenario_hash(scenario)
    export_csv(lg, out, prefix)
    summary = summarize(lg, verdict)
    summary["verdict"] = verdict.verdict if verdict else "too-short"
    (out / f"{prefix}.summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{prefix}: {summary['verdict']}")
    return EXIT_OK


def _sweep_job(job):
    scenario, min_slots, mult = job
    lg, verdict = _run_one(scenario, min_slots)
    return {
        "multiplier": mult, "seed": scenario.seed,
        "verdict": verdict.verdict if verdict else "too-short",
        "final_sum_q": float(lg.q[-1].sum()) if lg.slots else 0.0,
        "final_sum_Q": float(lg.backlog[-1].sum()) if lg.slots else 0.0,
        "max_p": float(lg.regulator.max(initial=0.0)),
    }


def cmd_sweep(args) -> int:
    multipliers = [float(m) for m in args.multipliers.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not multipliers or not seeds or any(m <= 0 for m in multipliers):
        raise cfg.ConfigError("need nonempty positive multipliers and a nonempty seed list")
    base, opts = cfg.load_config(args.config, _overrides(args))
    if not any(s.rate for s in base.sessions):
        base = replace(base, sessions=tuple(s.with_rate(1.0) for s in base.sessions))
    profile = [s.rate for s in base.sessions]
    try:
        star = max_uniform_rate(base.network, base.sessions, profile)
        print(f"max uniform multiplier of the configured rates: {star:.9g}")
    except InstanceTooLargeError:
        star = 1.0
        print("region oracle unavailable; multipliers scale the configured rates")
    jobs = [(replace(cfg.scale_rates(base, m * star), seed=seed), opts["min_slots"], m)
            for m in multipliers for seed in seeds]
    if args.parallel > 1:
        with ProcessPoolExecutor(args.parallel) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    cols = ["multiplier", "seed", "verdict", "final_sum_q", "final_sum_Q", "max_p"]
    lines = [",".join(cols)] + [",".join(str(r[c]) for c in cols) for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "sweep.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.which == "loynes":
        if args.hops:
            gap = loynes_check_csv(args.hops)
        else:
            scenario, _ = cfg.load_config(args.config, _overrides(args))
            gap = loynes_check(run(replace(scenario, record_hops=True)))
        print(f"max |engine - oracle| = {gap:.3g} chunks")
        return EXIT_OK
    scenario, _ = cfg.load_config(args.config, _overrides(args))
    net = scenario.network
    if args.which == "region":
        profile = [s.rate for s in scenario.sessions]
        if not any(profile):
            profile = None
        m, alloc = max_uniform_rate(net, scenario.sessions, profile, return_allocation=True)
        print(f"lambda* multiplier {m:.9g}; rates {', '.join(f'{r:.9g}' for r in alloc.rates)}")
        sys.stdout.write(alloc.to_text(net))
        return EXIT_OK
    # steiner
    if args.costs:
        q = [float(x) for x in args.costs.split(",")]
    else:
        q = [0.0] * net.num_links
    for sess in scenario.sessions:
        ex = exact_min_tree(net, sess.source, sess.receivers, q)
        ap = approx_min_tree(net, sess.source, sess.receivers, q, args.level)
        ce, ca = tree_cost(ex, q), tree_cost(ap, q)
        ratio = ca / ce if ce > 0 else (1.0 if ca == 0 else float("inf"))
        print(f"session {sess.id}: exact {ce:.9g} [{ex.key()}] approx {ca:.9g} [{ap.key()}] "
              f"ratio {ratio:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multitree", description=__doc__,
                                epilog=CONFIG_HELP + "\n\n" + cfg.__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required: bool):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--slots", type=int)
        sp.add_argument("--algorithm", choices=("alg1", "alg2"))
        sp.add_argument("--selector", choices=("exact", "approx", "random"))
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--eps1", type=float, help="chunks per slot")
        sp.add_argument("--eps2", type=float, help="chunks per slot")
        sp.add_argument("--delta", type=float)
        sp.add_argument("--control-delay", type=int)

    sp = sub.add_parser("run", help="run one scenario and export CSVs")
    common(sp, True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a grid of rate multipliers x seeds")
    common(sp, False)
    sp.add_argument("--multipliers", default="0.5,0.9,0.995,1.1",
                    help="fractions of the largest supportable rate")
    sp.add_argument("--seeds", default="0")
    sp.add_argument("--parallel", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", help="region | steiner | loynes")
    sp.add_argument("which", choices=("region", "steiner", "loynes"))
    sp.add_argument("--config")
    sp.add_argument("--hops", help="loynes: exported <hash>.hops.csv to replay")
    sp.add_argument("--costs", help="steiner: comma-separated link costs (default all zero)")
    sp.add_argument("--level", type=int, default=2)
    for flag in ("--seed", "--slots", "--control-delay"):
        sp.add_argument(flag, type=int)
    for flag in ("--gamma", "--eps1", "--eps2", "--delta"):
        sp.add_argument(flag, type=float)
    sp.add_argument("--algorithm", choices=("alg1", "alg2"))
    sp.add_argument("--selector", choices=("exact", "approx", "random"))
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "oracle" and not args.config and not (args.which == "loynes" and args.hops):
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except cfg.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstanceTooLargeError as exc:
        print(f"instance too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except (TopologyError, SteinerError) as exc:
        print(f"topology error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except (ValueError, RegionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
