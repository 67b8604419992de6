from __future__ import annotations

import json

import pytest

from channelmesh.channels import fund_network
from channelmesh.cli import main
from channelmesh.topology import build_star


def test_topology(tmp_path):
    out = tmp_path / "t.json"
    assert main(["topology", "--kind", "multihub", "--clients", "4", "--tiers", "2", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["kind"] == "multihub" and len(doc["edges"]) == 9


def test_simulate(tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"name": "d", "duration_s": 86400, "clients": 4}))
    out = tmp_path / "o.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    assert out.read_text().splitlines()[1] == "d,86400,4,82800,0,3600,1,0"


def test_simulate_validation_exit(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"duration_s": -4, "topology": "ring"}))
    assert main(["simulate", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "/duration_s" in err and "/topology" in err


def _state_file(tmp_path, balances):
    st = fund_network(build_star(2), 0, 0)
    for cid, (a, b) in balances.items():
        st.channels[cid].balance_a, st.channels[cid].balance_b = a, b
    p = tmp_path / "state.json"
    p.write_text(st.to_json())
    return p


def test_rebalance_lp(tmp_path):
    state = _state_file(tmp_path, {"0-1": (150, 50), "0-2": (80, 120)})
    out = tmp_path / "plan.json"
    assert main(["rebalance", "--state", str(state), "--mode", "lp", "--l-min", "100",
                 "--l-available", "100", "--out", str(out)]) == 0
    plan = json.loads(out.read_text())
    assert plan["transfers"][0] == {"channel": "0-1", "from": 0, "to": 1, "amount_msat": 50}


def test_rebalance_infeasible_exit(tmp_path):
    state = _state_file(tmp_path, {"0-1": (10, 10), "0-2": (80, 120)})
    assert main(["rebalance", "--state", str(state), "--l-min", "100"]) == 3


def test_failover_drill(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"duration_s": 20000, "clients": 4, "topology": "multihub", "hub_tiers": 2,
                               "dormant_funding_msat": 200000000000}))
    assert main(["failover-drill", "--config", str(cfg), "--fail-at", "10000"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["failed_hub"] == 0 and rep["activated_hub"] == 1
    assert rep["active_at"] == pytest.approx(rep["detected_at"] + 5)


def test_failover_drill_network_down(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"duration_s": 20000, "clients": 4}))
    assert main(["failover-drill", "--config", str(cfg), "--fail-at", "10000"]) == 4
    assert json.loads(capsys.readouterr().out)["network_down"] is True


def test_compare(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["compare", "--min", "2", "--max", "10", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 10


def test_run_packaged_and_parallel(tmp_path):
    out = tmp_path / "all.csv"
    args = ["run", "scenarios/rebalance_lp_demo", "circular_demo", "--out-dir", str(tmp_path / "o"),
            "--out", str(out)]
    assert main(args) == 0
    serial = out.read_text()
    assert serial.count("scenario,") == 1 and len(serial.splitlines()) == 3
    assert main(args + ["--parallel", "2"]) == 0
    assert out.read_text() == serial
    assert (tmp_path / "o" / "circular_demo.manifest.json").exists()


def test_run_missing_scenario():
    assert main(["run", "no_such_scenario"]) == 2
