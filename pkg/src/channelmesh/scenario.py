"""
Scenario files: one JSON document describing topology, funding, fees,
simulation parameters, failover policy and an optional up-front rebalance.

    {
      "name": "month",
      "topology": {"kind": "star", "clients": 100},
      "funding": {"client_msat": 100000000000, "hub_msat": 100000000000},
      "fees": {"base_fee_msat": 0, "fee_rate_ppm": 0},
      "sim": {"preset": "table1", "duration_s": 2592000},
      "failover": {"failure_timeout_s": 30}
    }

``funding.channels`` may override individual channels as
``{"a-b": [balance_a, balance_b]}``.  A ``rebalance`` section
(``{"mode": "lp" | "circular", "l_min_msat": ..., ...}``) is planned and
applied to the funded state before the simulation starts.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from . import __version__
from .channels import NetworkState, channel_id
from .errors import InvalidArgument, ValidationError
from .failover import FailoverPolicy
from .rebalance import (
    Plan,
    apply_plan,
    circular_input_from_state,
    hub_input_from_state,
    plan_circular_rebalance,
    plan_hub_rebalance,
    plan_to_dict,
)
from .report import summarize
from .sim import PRESETS, SimConfig, SimReport, build_network, run_simulation
from .topology import Kind, build, edge_count, query_cost

PACKAGED = ("table1_month", "table1_halfyear", "table1_year", "failover_drill",
            "rebalance_lp_demo", "circular_demo")

_msat = {"type": "integer", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

SIM_PROPERTIES: dict[str, Any] = {
    "preset": {"enum": sorted(PRESETS)},
    "duration_s": _pos,
    "tx_processing_time_s": _pos,
    "payment_service_time_s": _pos,
    "rebalance_interval_s": _pos,
    "rebalance_downtime_s": _nonneg,
    "failure_injections": {
        "type": "array",
        "items": {"type": "array", "prefixItems": [_nonneg, {"type": "integer", "minimum": 0}],
                  "minItems": 2, "maxItems": 2},
    },
    "seed": {"type": "integer"},
    "payment_amount_msat": _msat,
    "rebalance_l_min_msat": {"anyOf": [_msat, {"type": "null"}]},
    "rebalance_budget_msat": {"anyOf": [_msat, {"type": "null"}]},
    "fast_forward": {"type": "boolean"},
}

FAILOVER_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "heartbeat_interval_s": _pos,
        "failure_timeout_s": _pos,
        "activation_delay_s": _nonneg,
        "liquidity_mirror_ratio": {"type": "number", "minimum": 0, "maximum": 1},
        "replenish_delay_s": _nonneg,
        "suspect_after_s": {"anyOf": [_pos, {"type": "null"}]},
    },
}

# standalone SimConfig documents accepted by `simulate` and `failover-drill`
SIM_CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["duration_s"],
    "properties": {
        **SIM_PROPERTIES,
        "name": {"type": "string", "minLength": 1},
        "clients": {"type": "integer", "minimum": 1},
        "topology": {"enum": [k.value for k in Kind]},
        "hub_tiers": {"type": "integer", "minimum": 1},
        "base_fee_msat": _msat,
        "fee_rate_ppm": {"type": "integer", "minimum": 0, "maximum": 1_000_000},
        "client_funding_msat": _msat,
        "hub_funding_msat": _msat,
        "dormant_funding_msat": {"anyOf": [_msat, {"type": "null"}]},
        "hub_link_funding_msat": {"anyOf": [_msat, {"type": "null"}]},
        "failover": FAILOVER_SCHEMA,
    },
}

SCENARIO_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "topology", "sim"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "topology": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "clients"],
            "properties": {
                "kind": {"enum": [k.value for k in Kind]},
                "clients": {"type": "integer", "minimum": 1},
                "tiers": {"type": "integer", "minimum": 1},
            },
        },
        "funding": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "client_msat": _msat,
                "hub_msat": _msat,
                "dormant_msat": _msat,
                "link_msat": _msat,
                "channels": {
                    "type": "object",
                    "propertyNames": {"pattern": "^[0-9]+-[0-9]+$"},
                    "additionalProperties": {"type": "array", "items": _msat,
                                             "minItems": 2, "maxItems": 2},
                },
            },
        },
        "fees": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "base_fee_msat": _msat,
                "fee_rate_ppm": {"type": "integer", "minimum": 0, "maximum": 1_000_000},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "required": ["duration_s"],
            "properties": SIM_PROPERTIES,
        },
        "failover": FAILOVER_SCHEMA,
        "rebalance": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mode", "l_min_msat"],
            "properties": {
                "mode": {"enum": ["lp", "circular"]},
                "l_min_msat": _msat,
                "l_available_msat": _msat,
                "loop": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3},
            },
        },
    },
}


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def schema_errors(doc: Any, schema: dict[str, Any]) -> list[tuple[str, str]]:
    v = jsonschema.Draft202012Validator(schema)
    out = []
    for e in v.iter_errors(doc):
        ptr = _pointer(e.absolute_path)
        if e.validator == "required":
            missing = e.message.split("'")[1]
            ptr = f"{ptr}/{missing}"
        out.append((ptr, e.message))
    return sorted(set(out))


@dataclass
class ScenarioFile:
    name: str
    topology: dict[str, Any]
    funding: dict[str, Any]
    fees: dict[str, int]
    sim: SimConfig
    failover: FailoverPolicy
    rebalance: dict[str, Any] | None = None
    raw: dict[str, Any] = field(default_factory=dict, repr=False)
    source: str | None = None

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


@dataclass
class RunManifest:
    tool: str
    version: str
    scenario: str
    config_hash: str
    seed: int
    outputs: dict[str, str]
    started_at: str
    finished_at: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(doc: Any) -> str:
    return hashlib.sha256(canonical_json(doc).encode("ascii")).hexdigest()


def _sim_kwargs(doc: dict[str, Any]) -> dict[str, Any]:
    topo = doc["topology"]
    funding = doc.get("funding", {})
    fees = doc.get("fees", {})
    kw = dict(doc["sim"])
    kw.update(
        name=doc["name"],
        topology=topo["kind"],
        clients=topo["clients"],
        hub_tiers=topo.get("tiers", 1),
        failover=FailoverPolicy.from_dict(doc.get("failover")),
    )
    for src, dst in (("client_msat", "client_funding_msat"), ("hub_msat", "hub_funding_msat"),
                     ("dormant_msat", "dormant_funding_msat"), ("link_msat", "hub_link_funding_msat")):
        if src in funding:
            kw[dst] = funding[src]
    kw.update(fees)
    return kw


def _semantic_errors(doc: dict[str, Any]) -> list[tuple[str, str]]:
    errs: list[tuple[str, str]] = []
    topo = doc["topology"]
    kind, clients, tiers = topo["kind"], topo["clients"], topo.get("tiers", 1)
    if kind == "star" and tiers != 1:
        errs.append(("/topology/tiers", "a star has exactly one hub tier"))
    if kind == "complete" and "tiers" in topo:
        errs.append(("/topology/tiers", "a complete mesh has no hubs"))
    if clients < 2:
        errs.append(("/topology/clients", "simulation needs at least two clients"))
    try:
        FailoverPolicy.from_dict(doc.get("failover"))
    except (InvalidArgument, TypeError) as e:
        errs.append(("/failover", str(e)))
    sim = doc["sim"]
    for i, (t, tier) in enumerate(sim.get("failure_injections", [])):
        if t >= sim["duration_s"]:
            errs.append((f"/sim/failure_injections/{i}/0", "failure after the end of the run"))
        if kind == "complete" or tier >= tiers:
            errs.append((f"/sim/failure_injections/{i}/1", f"no hub at tier {tier}"))
    interval = sim.get("rebalance_interval_s", 86400)
    if sim.get("rebalance_downtime_s", 3600) >= interval:
        errs.append(("/sim/rebalance_downtime_s", "must be shorter than rebalance_interval_s"))

    try:
        topology = build(kind, clients, tiers)
    except InvalidArgument as e:
        errs.append(("/topology", str(e)))
        return errs
    n = topology.node_count
    for key in doc.get("funding", {}).get("channels", {}):
        a, b = (int(v) for v in key.split("-"))
        if a >= n or b >= n:
            errs.append((f"/funding/channels/{key}", "references an unknown node"))
        elif a >= b or not topology.has_edge(a, b):
            errs.append((f"/funding/channels/{key}", f"no channel {channel_id(a, b)} in the topology"))
    reb = doc.get("rebalance")
    if reb is not None:
        if kind == "complete":
            errs.append(("/rebalance", "rebalancing needs a hub topology"))
        if reb["mode"] == "circular":
            loop = reb.get("loop")
            if loop is None:
                errs.append(("/rebalance/loop", "circular mode needs a loop"))
            else:
                for i, node in enumerate(loop):
                    if node >= n:
                        errs.append((f"/rebalance/loop/{i}", "unknown node"))
                    elif not topology.has_edge(node, loop[(i + 1) % len(loop)]) \
                            and loop[(i + 1) % len(loop)] < n:
                        errs.append((f"/rebalance/loop/{i}", "consecutive loop nodes share no channel"))
        elif "loop" in reb:
            errs.append(("/rebalance/loop", "only used in circular mode"))
    if not errs:
        try:
            SimConfig.from_dict(_sim_kwargs(doc))
        except InvalidArgument as e:
            errs.append(("/sim", str(e)))
    return errs


def validate_scenario(doc: Any) -> list[tuple[str, str]]:
    errs = schema_errors(doc, SCENARIO_SCHEMA)
    if errs:
        return errs
    return _semantic_errors(doc)


def scenario_from_dict(doc: dict[str, Any], source: str | None = None) -> ScenarioFile:
    errs = validate_scenario(doc)
    if errs:
        raise ValidationError(errs)
    funding = dict(doc.get("funding", {}))
    return ScenarioFile(
        name=doc["name"],
        topology=dict(doc["topology"]),
        funding=funding,
        fees=dict(doc.get("fees", {})),
        sim=SimConfig.from_dict(_sim_kwargs(doc)),
        failover=FailoverPolicy.from_dict(doc.get("failover")),
        rebalance=doc.get("rebalance"),
        raw=doc,
        source=source,
    )


def resolve_scenario_path(ref: str | Path) -> Path:
    """A file path, the same path without ``.json``, or a packaged scenario name."""
    p = Path(ref)
    if p.is_file():
        return p
    if p.with_name(p.name + ".json").is_file():
        return p.with_name(p.name + ".json")
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    if name in PACKAGED:
        return Path(str(resources.files("channelmesh") / "scenarios" / f"{name}.json"))
    raise FileNotFoundError(f"no scenario file {ref!r}")


def parse_scenario(path: str | Path) -> ScenarioFile:
    path = resolve_scenario_path(path)
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValidationError([("", f"not valid JSON: {e}")]) from e
    return scenario_from_dict(doc, str(path))


def scenario_state(scenario: ScenarioFile) -> NetworkState:
    state = build_network(scenario.sim)
    for key, (ba, bb) in sorted(scenario.funding.get("channels", {}).items()):
        ch = state.channels[key]
        # an override redefines the channel, capacity included
        ch.balance_a, ch.balance_b = ba, bb
    return state


def plan_for_scenario(scenario: ScenarioFile, state: NetworkState) -> Plan:
    reb = scenario.rebalance
    if reb["mode"] == "lp":
        inp = hub_input_from_state(state, reb["l_min_msat"], reb.get("l_available_msat"))
        return plan_hub_rebalance(inp)
    inp = circular_input_from_state(state, reb["loop"], reb["l_min_msat"])
    return plan_circular_rebalance(inp)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")


def run_scenario(scenario: ScenarioFile, seed: int | None = None,
                 out_dir: str | Path | None = None) -> tuple[SimReport, RunManifest]:
    """Build, fund, optionally rebalance, simulate and summarize one scenario.

    With ``out_dir`` the CSV, JSON report, plan (if any) and manifest are
    written there as ``<name>.*``.
    """
    started = _now()
    seed = scenario.sim.seed if seed is None else seed
    cfg = replace(scenario.sim, seed=seed)
    state = scenario_state(scenario)
    plan = None
    if scenario.rebalance is not None:
        plan = plan_for_scenario(scenario, state)
        apply_plan(state, plan)
    report = run_simulation(cfg, state)

    outputs: dict[str, str] = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = out / scenario.name
        outputs["csv"] = str(stem.with_suffix(".csv"))
        outputs["report"] = str(stem.with_suffix(".report.json"))
        summarize(report, outputs["csv"], outputs["report"])
        if plan is not None:
            outputs["plan"] = str(stem.with_suffix(".plan.json"))
            Path(outputs["plan"]).write_text(json.dumps(plan_to_dict(plan), indent=2) + "\n")
        outputs["manifest"] = str(stem.with_suffix(".manifest.json"))
    manifest = RunManifest("channelmesh", __version__, scenario.name, scenario.config_hash,
                           seed, outputs, started, _now())
    if "manifest" in outputs:
        Path(outputs["manifest"]).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return report, manifest


COMPARE_COLUMNS = ("n_total", "complete_edges", "star_edges", "multihub_edges",
                   "q_mesh", "q_central", "onchain_opens_complete", "onchain_opens_star",
                   "onchain_opens_multihub")


def compare_topologies(clients_range, report_path: str | Path | None = None) -> list[dict[str, int]]:
    """Edge counts, query costs and channel-opening transactions per topology.

    ``clients_range`` holds total node counts n >= 2.  The star and the
    dual-hub star serve the same n - 1 clients; the mesh connects all n nodes.
    """
    ns = list(clients_range)
    if not ns:
        raise InvalidArgument("empty range")
    rows = []
    for n in ns:
        if n < 2:
            raise InvalidArgument("need at least two nodes")
        mesh = build(Kind.COMPLETE, n)
        star = build(Kind.STAR, n - 1)
        dual = build(Kind.MULTIHUB, n - 1, 2)
        rows.append({
            "n_total": n,
            "complete_edges": edge_count(mesh),
            "star_edges": edge_count(star),
            "multihub_edges": edge_count(dual),
            "q_mesh": query_cost(mesh),
            "q_central": query_cost(star),
            # every channel costs one funding transaction
            "onchain_opens_complete": len(mesh.edges),
            "onchain_opens_star": len(star.edges),
            "onchain_opens_multihub": len(dual.edges),
        })
    if report_path is not None:
        with open(report_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, COMPARE_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return rows
