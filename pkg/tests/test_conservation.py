"""Ledger invariants under random interleavings of payments, rebalances and switchovers."""

from __future__ import annotations

from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from channelmesh.channels import FeePolicy, execute_payment, fund_network
from channelmesh.errors import InfeasibleError, NetworkDown
from channelmesh.failover import FailoverPolicy, complete_switchover, mark_hub_failed, trigger_switchover
from channelmesh.rebalance import (
    apply_plan,
    circular_input_from_state,
    hub_input_from_state,
    plan_circular_rebalance,
    plan_hub_rebalance,
)
from channelmesh.topology import build_multi_hub

CLIENTS = 4


class Ledger(RuleBasedStateMachine):
    def __init__(self):
        super().__init__()
        self.state = fund_network(build_multi_hub(CLIENTS, 3), client_msat=5_000, hub_msat=5_000,
                                  link_msat=5_000, hub_policy=FeePolicy(3, 20_000))
        self.caps = {cid: ch.capacity for cid, ch in self.state.channels.items()}
        self.clients = self.state.topology.clients

    @rule(s=st.integers(0, CLIENTS - 1), r=st.integers(0, CLIENTS - 1), amount=st.integers(0, 6_000))
    def pay(self, s, r, amount):
        if s == r:
            return
        s, r = self.clients[s], self.clients[r]
        before = self.state.snapshot()
        hub = self.state.active_hub
        pre_s = self.state.channel(s, hub).balance_of(s)
        pre_r = self.state.channel(r, hub).balance_of(r)
        res = execute_payment(self.state, s, r, amount)
        if not res.ok:
            assert self.state.snapshot() == before
            return
        debit = pre_s - self.state.channel(s, hub).balance_of(s)
        credit = self.state.channel(r, hub).balance_of(r) - pre_r
        assert credit == amount
        assert debit == credit + res.fees_paid_msat

    @precondition(lambda self: self.state.available)
    @rule(l_min=st.integers(0, 6_000), budget=st.integers(0, 20_000))
    def hub_rebalance(self, l_min, budget):
        before = self.state.snapshot()
        try:
            plan = plan_hub_rebalance(hub_input_from_state(self.state, l_min, budget), tie_break=False)
        except InfeasibleError:
            assert self.state.snapshot() == before
            return
        apply_plan(self.state, plan)

    @precondition(lambda self: self.state.available and self.state.active_hub == 0)
    @rule(c=st.integers(0, CLIENTS - 1), l_min=st.integers(0, 6_000))
    def circular_rebalance(self, c, l_min):
        before = self.state.snapshot()
        inp = circular_input_from_state(self.state, [0, self.clients[c], 1], l_min)
        total = sum(inp.forward)
        try:
            plan = plan_circular_rebalance(inp, tie_break=False)
        except InfeasibleError:
            assert self.state.snapshot() == before
            return
        assert sum(plan.post) == total
        apply_plan(self.state, plan)

    @precondition(lambda self: self.state.available)
    @rule()
    def fail_active_hub(self):
        before = {cid: (c.balance_a, c.balance_b) for cid, c in self.state.channels.items()}
        mark_hub_failed(self.state, self.state.active_hub)
        try:
            rep = trigger_switchover(self.state, FailoverPolicy(), 0.0)
        except NetworkDown:
            return
        complete_switchover(self.state, rep)
        assert {cid: (c.balance_a, c.balance_b) for cid, c in self.state.channels.items()} == before

    @invariant()
    def capacities_and_signs(self):
        for cid, ch in self.state.channels.items():
            assert ch.capacity == self.caps[cid]
            assert ch.balance_a >= 0 and ch.balance_b >= 0


TestLedger = Ledger.TestCase
TestLedger.settings = settings(max_examples=60, stateful_step_count=60, deadline=None)
