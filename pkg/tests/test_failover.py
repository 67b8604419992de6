from __future__ import annotations

import pytest

from channelmesh.channels import execute_payment, fund_network
from channelmesh.errors import InvalidArgument, InvalidTime, NetworkDown
from channelmesh.failover import (
    FailoverPolicy,
    HubHealth,
    HubStatus,
    check,
    complete_switchover,
    evaluate,
    mark_hub_failed,
    readiness_check,
    record_heartbeat,
    repair,
    trigger_switchover,
)
from channelmesh.topology import build_multi_hub, build_star

POLICY = FailoverPolicy()


def test_heartbeat_then_check():
    h = record_heartbeat(HubHealth(0), 10)
    assert evaluate(h, POLICY, 10) is HubStatus.HEALTHY


def test_timeout_boundary_is_strict():
    h = HubHealth(0, last_heartbeat=100)
    assert evaluate(h, POLICY, 130) is HubStatus.HEALTHY
    assert evaluate(h, POLICY, 131) is HubStatus.FAILED
    assert evaluate(HubHealth(0), POLICY, 0) is HubStatus.HEALTHY


def test_failed_is_absorbing_until_repair():
    h = check(HubHealth(0), POLICY, 31)
    assert h.status is HubStatus.FAILED
    h = record_heartbeat(h, 32)
    assert h.status is HubStatus.FAILED and evaluate(h, POLICY, 32) is HubStatus.FAILED
    h = repair(h, 40)
    assert h.status is HubStatus.HEALTHY


def test_time_regression():
    with pytest.raises(InvalidTime):
        record_heartbeat(HubHealth(0, last_heartbeat=20), 19)


def test_suspect_is_opt_in():
    h = HubHealth(0)
    assert evaluate(h, POLICY, 25) is HubStatus.HEALTHY
    assert evaluate(h, FailoverPolicy(suspect_after_s=15), 25) is HubStatus.SUSPECT


@pytest.mark.parametrize("kw", [
    {"heartbeat_interval_s": 0}, {"failure_timeout_s": 5}, {"activation_delay_s": -1},
    {"liquidity_mirror_ratio": 1.5},
])
def test_policy_validation(kw):
    with pytest.raises(InvalidArgument):
        FailoverPolicy(**kw)


def test_dual_hub_switchover():
    st = fund_network(build_multi_hub(3, 2), 1000, 1000)
    snap = {cid: (c.balance_a, c.balance_b) for cid, c in st.channels.items()}
    mark_hub_failed(st, 0)
    rep = trigger_switchover(st, POLICY, 100.0)
    assert (rep.failed_hub, rep.activated_hub) == (0, 1)
    assert rep.active_at == rep.detected_at + POLICY.activation_delay_s
    assert rep.deficit_channels == 0
    assert execute_payment(st, 2, 3, 10).status.value == "network_down"
    complete_switchover(st, rep)
    assert {cid: (c.balance_a, c.balance_b) for cid, c in st.channels.items()} == snap
    res = execute_payment(st, 2, 3, 10)
    assert res.ok and res.hops == ("1-2", "1-3")


def test_three_tier_skips_failed_tiers():
    st = fund_network(build_multi_hub(2, 3), 1000, 1000)
    mark_hub_failed(st, 1)
    mark_hub_failed(st, 0)
    assert trigger_switchover(st, POLICY, 0).activated_hub == 2


def test_star_failure_is_network_down():
    st = fund_network(build_star(2), 1000, 1000)
    mark_hub_failed(st, 0)
    with pytest.raises(NetworkDown):
        trigger_switchover(st, POLICY, 0)
    assert not st.available


def test_failed_hub_channels_are_frozen():
    st = fund_network(build_multi_hub(2, 2), 1000, 1000)
    mark_hub_failed(st, 0)
    rep = trigger_switchover(st, POLICY, 0)
    complete_switchover(st, rep)
    # the primary's channels are no longer usable even for direct hub payments
    assert execute_payment(st, 2, 0, 1).status.value == "network_down"


def test_readiness_check():
    st = fund_network(build_multi_hub(2, 2), 1000, 1000)
    assert readiness_check(st, POLICY) == {1: []}
    st.channel(1, 2).set_balance(1, 500)
    [d] = readiness_check(st, POLICY)[1]
    assert (d.channel, d.client, d.shortfall_msat) == ("1-2", 2, 500)
    assert readiness_check(st, FailoverPolicy(liquidity_mirror_ratio=0.0)) == {1: []}


def test_deficits_delay_activation():
    st = fund_network(build_multi_hub(2, 2), 1000, 1000, dormant_msat=10)
    mark_hub_failed(st, 0)
    rep = trigger_switchover(st, POLICY, 50.0)
    assert rep.deficit_channels == 2
    assert rep.active_at == 50.0 + 5 + 2 * 600
