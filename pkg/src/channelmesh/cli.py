"""Command-line entry point: ``channelmesh <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .channels import NetworkState
from .errors import InfeasibleError, InvalidArgument, InvalidTrace, ValidationError
from .rebalance import (
    circular_input_from_state,
    hub_input_from_state,
    plan_circular_rebalance,
    plan_hub_rebalance,
    plan_to_dict,
)
from .report import summarize
from .scenario import (
    SIM_CONFIG_SCHEMA,
    compare_topologies,
    parse_scenario,
    run_scenario,
    schema_errors,
)
from .sim import SimConfig, run_simulation
from .topology import build, edge_count, query_cost

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_NETWORK_DOWN = 4

log = logging.getLogger("channelmesh")


def _setup_logging() -> None:
    level = os.environ.get("CHANNELMESH_LOG", "").upper()
    if level in ("DEBUG", "INFO"):
        logging.basicConfig(level=getattr(logging, level), stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ValidationError([("", f"cannot read {path}: no such file")]) from e
    except json.JSONDecodeError as e:
        raise ValidationError([("", f"{path} is not valid JSON: {e}")]) from e


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def load_sim_config(path: str) -> SimConfig:
    """A scenario file (has a ``sim`` section) or a bare SimConfig document."""
    doc = _read_json(path)
    if isinstance(doc, dict) and "sim" in doc:
        return parse_scenario(path).sim
    errs = schema_errors(doc, SIM_CONFIG_SCHEMA)
    if errs:
        raise ValidationError(errs)
    return SimConfig.from_dict(doc)


# -- subcommands -------------------------------------------------------------


def cmd_topology(args) -> int:
    t = build(args.kind, args.clients, args.tiers)
    _write(t.to_json() + "\n", args.out)
    print(f"{t.kind.value}: {t.node_count} nodes, {edge_count(t)} edges, "
          f"{query_cost(t)} channel queries", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_sim_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    report = run_simulation(cfg)
    text = summarize(report, None if args.out in (None, "-") else args.out, args.json)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    return EXIT_OK


def cmd_rebalance(args) -> int:
    state = NetworkState.from_dict(_read_json(args.state))
    if args.mode == "lp":
        costs = None
        if args.costs:
            costs = {k: float(v) for k, v in _read_json(args.costs).items()}
        inp = hub_input_from_state(state, args.l_min, args.l_available, costs)
        plan = plan_hub_rebalance(inp)
    else:
        if not args.loop:
            raise ValidationError([("/loop", "circular mode needs --loop CR,P1,...,DN")])
        loop = [int(v) for v in args.loop.split(",")]
        plan = plan_circular_rebalance(circular_input_from_state(state, loop, args.l_min))
    _write(json.dumps(plan_to_dict(plan), indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_failover_drill(args) -> int:
    cfg = load_sim_config(args.config)
    injections = list(cfg.failure_injections) + [(args.fail_at, args.fail_tier)]
    cfg = replace(cfg, failure_injections=injections)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    report = run_simulation(cfg)
    doc: dict[str, Any] = {
        "switchovers": [s.to_dict() for s in report.switchovers],
        "network_down": report.network_down,
        "payments_completed": report.payments_completed,
        "payments_failed": report.payments_failed,
        "outage_s": report.outage_s,
    }
    if report.switchovers:
        doc.update(report.switchovers[-1].to_dict())
    _write(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_NETWORK_DOWN if report.network_down else EXIT_OK


def cmd_compare(args) -> int:
    rows = compare_topologies(range(args.min, args.max + 1, args.step), args.out)
    if args.out is None:
        cols = list(rows[0])
        print(",".join(cols))
        for r in rows:
            print(",".join(str(r[c]) for c in cols))
    return EXIT_OK


def _run_one(ref: str, seed: int | None, out_dir: str | None) -> tuple[str, dict[str, Any], str]:
    scenario = parse_scenario(ref)
    report, manifest = run_scenario(scenario, seed, out_dir)
    return summarize(report), manifest.to_dict(), scenario.name


def cmd_run(args) -> int:
    # validate everything before running anything
    for ref in args.scenarios:
        parse_scenario(ref)
    if args.parallel > 1 and len(args.scenarios) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            futs = [pool.submit(_run_one, ref, args.seed, args.out_dir) for ref in args.scenarios]
            results = [f.result() for f in futs]
    else:
        results = [_run_one(ref, args.seed, args.out_dir) for ref in args.scenarios]
    lines = []
    for i, (csv_text, manifest, name) in enumerate(results):
        body = csv_text.splitlines(keepends=True)
        lines.extend(body if i == 0 else body[1:])
        print(f"{name}: config {manifest['config_hash'][:12]} seed {manifest['seed']}", file=sys.stderr)
    _write("".join(lines), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="channelmesh",
                                description="Closed hub-and-spoke payment channel network toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("topology", help="build a topology and write it as JSON")
    t.add_argument("--kind", choices=["complete", "star", "multihub"], required=True)
    t.add_argument("--clients", type=int, required=True,
                   help="client count (node count for complete)")
    t.add_argument("--tiers", type=int, default=1, help="hub tiers for multihub")
    t.add_argument("--out", help="output file (default stdout)")
    t.set_defaults(func=cmd_topology)

    s = sub.add_parser("simulate", help="run one simulation config, write CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="CSV output (default stdout)")
    s.add_argument("--json", help="also write the full report as JSON")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("rebalance", help="plan a rebalance for a saved network state")
    r.add_argument("--state", required=True)
    r.add_argument("--mode", choices=["lp", "circular"], default="lp")
    r.add_argument("--l-min", type=int, required=True, help="minimum side balance, msat")
    r.add_argument("--l-available", type=int, help="hub liquidity budget, msat (lp mode)")
    r.add_argument("--costs", help="JSON map channel id -> unit cost (lp mode)")
    r.add_argument("--loop", help="comma-separated loop CR,P1,...,Pk,DN (circular mode)")
    r.add_argument("--out", help="plan JSON output (default stdout)")
    r.set_defaults(func=cmd_rebalance)

    f = sub.add_parser("failover-drill", help="inject a hub failure and report the switchover")
    f.add_argument("--config", required=True)
    f.add_argument("--fail-at", type=float, required=True, help="failure time, seconds")
    f.add_argument("--fail-tier", type=int, default=0)
    f.add_argument("--seed", type=int)
    f.add_argument("--out")
    f.set_defaults(func=cmd_failover_drill)

    c = sub.add_parser("compare", help="edge counts and query costs per topology")
    c.add_argument("--min", type=int, default=2, help="smallest total node count")
    c.add_argument("--max", type=int, default=101)
    c.add_argument("--step", type=int, default=1)
    c.add_argument("--out", help="CSV output (default stdout)")
    c.set_defaults(func=cmd_compare)

    u = sub.add_parser("run", help="run scenario files or packaged scenarios")
    u.add_argument("scenarios", nargs="+", help="path or packaged name, e.g. table1_month")
    u.add_argument("--seed", type=int)
    u.add_argument("--out-dir", help="directory for per-scenario CSV, report, plan and manifest")
    u.add_argument("--out", help="combined CSV (default stdout)")
    u.add_argument("--parallel", type=int, default=1)
    u.set_defaults(func=cmd_run)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InvalidArgument, InvalidTrace, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
