from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from channelmesh.channels import fund_network
from channelmesh.errors import InfeasibleError, InvalidArgument, ProblemTooLarge, StalePlan
from channelmesh.lp import solve_lp
from channelmesh.rebalance import (
    CircularInput,
    HubRebalanceInput,
    apply_plan,
    brute_force_oracle,
    circular_input_from_state,
    circular_lp,
    circular_post_state,
    hub_input_from_state,
    hub_lp,
    needs_rebalance,
    plan_circular_rebalance,
    plan_greedy_rebalance,
    plan_hub_rebalance,
    plan_to_dict,
)
from channelmesh.topology import build_multi_hub, build_star

EXAMPLE = HubRebalanceInput([50, 120], [150, 80], l_min=100, l_available=100)


def test_hub_worked_example():
    plan = plan_hub_rebalance(EXAMPLE)
    assert plan.x == (50, -20)
    assert plan.y_aux == (50, 20)
    assert plan.objective == 70


def test_hub_lp_relaxation_objective():
    r = solve_lp(hub_lp(EXAMPLE))
    assert r.objective == pytest.approx(70)


def test_hub_already_balanced():
    plan = plan_hub_rebalance(HubRebalanceInput([100, 300], [200, 100], 100, 0))
    assert plan.x == (0, 0) and plan.objective == 0


def test_hub_lmin_above_capacity():
    with pytest.raises(InfeasibleError):
        plan_hub_rebalance(HubRebalanceInput([60, 500], [30, 500], 50, 10**6))


def test_hub_budget_binds():
    # channel 0 needs 50 from the hub, only 40 is available and channel 1 has nothing to return
    with pytest.raises(InfeasibleError):
        plan_hub_rebalance(HubRebalanceInput([50, 100], [150, 100], 100, 40))
    # inbound liquidity pulled from channel 1 counts against the budget
    plan = plan_hub_rebalance(HubRebalanceInput([50, 200], [150, 200], 100, 40))
    assert plan.x == (50, -10)


def test_hub_costs_steer_the_plan():
    # the budget forces a pull of at least 20 on channel 1
    inp = HubRebalanceInput([50, 200], [150, 100], 100, 30, costs=[1.0, 3.0])
    plan = plan_hub_rebalance(inp)
    assert plan.x[0] == 50 and plan.x[1] <= -20
    assert plan.objective == 50 + 3 * abs(plan.x[1])


def test_input_validation():
    with pytest.raises(InvalidArgument):
        HubRebalanceInput([1], [1, 2], 0, 0)
    with pytest.raises(InvalidArgument):
        HubRebalanceInput([-1], [1], 0, 0)
    with pytest.raises(InvalidArgument):
        CircularInput([1, 2], 0)


def test_circular_worked_example():
    inp = CircularInput([100, 40, 60, 10], 20)
    plan = plan_circular_rebalance(inp)
    assert plan.objective == 20 and plan.y == 10 and sum(plan.x) == 10
    x1, x2 = plan.x
    assert x1 - x2 >= -20 and x2 >= -30
    # the deterministic tie-break: smallest L2 norm, then lexicographic
    assert plan.x == (0, 10)
    assert plan.post == circular_post_state(inp.forward, plan.x, plan.y)
    assert min(plan.post) >= 20 and sum(plan.post) == 210


def test_circular_infeasible_example():
    with pytest.raises(InfeasibleError):
        plan_circular_rebalance(CircularInput([100, 40, 60, 10], 50))
    assert brute_force_oracle(CircularInput([100, 40, 60, 10], 50)) is None


def test_circular_zero_plan():
    plan = plan_circular_rebalance(CircularInput([30, 40, 50], 20))
    assert plan.x == (0,) and plan.y == 0 and plan.objective == 0


def test_circular_reverse_bounds():
    # pushing 10 back over edge 0 needs 10 on its reverse side
    inp = CircularInput([10, 50, 100], 20, reverse=[5, 100, 100])
    with pytest.raises(InfeasibleError):
        plan_circular_rebalance(inp)
    assert brute_force_oracle(inp) is None
    ok = CircularInput([10, 50, 100], 20, reverse=[10, 100, 100])
    assert plan_circular_rebalance(ok).objective == 20


def test_oracle_examples():
    assert brute_force_oracle(EXAMPLE, grid_step=10) == 70
    assert brute_force_oracle(EXAMPLE, grid_step=1) == 70
    assert brute_force_oracle(CircularInput([100, 40, 60, 10], 20), grid_step=1) == 20
    assert brute_force_oracle(HubRebalanceInput([100], [100], 50, 0)) == 0


def test_oracle_refuses_large_grids():
    big = HubRebalanceInput([10**6] * 3, [10**6] * 3, 0, 10**7)
    with pytest.raises(ProblemTooLarge):
        brute_force_oracle(big, grid_step=1)


def test_needs_rebalance():
    st_ = fund_network(build_star(2), client_msat=100, hub_msat=100)
    assert needs_rebalance(st_, 100) == []
    st_.channel(0, 1).set_balance(1, 99)
    assert needs_rebalance(st_, 100) == [("0-1", 1, 99)]
    st_.channel(0, 2).set_balance(2, 50)
    assert len(needs_rebalance(st_, 160)) == 4


def _example_state():
    state = fund_network(build_star(2), client_msat=0, hub_msat=0)
    state.channels["0-1"].balance_a, state.channels["0-1"].balance_b = 150, 50
    state.channels["0-2"].balance_a, state.channels["0-2"].balance_b = 80, 120
    return state


def test_apply_hub_plan():
    state = _example_state()
    plan = plan_hub_rebalance(hub_input_from_state(state, 100, 100))
    assert plan.x == (50, -20)
    apply_plan(state, plan)
    assert (state.channel(0, 1).balance_of(1), state.channel(0, 1).balance_of(0)) == (100, 100)
    assert (state.channel(0, 2).balance_of(2), state.channel(0, 2).balance_of(0)) == (100, 100)
    # the same plan is stale now
    with pytest.raises(StalePlan):
        apply_plan(state, plan)


def test_apply_zero_plan_and_closed_channel():
    state = fund_network(build_star(2), 200, 200)
    plan = plan_hub_rebalance(hub_input_from_state(state, 100))
    snap = state.snapshot()
    apply_plan(state, plan)
    assert state.snapshot() == snap
    del state.channels["0-2"]
    with pytest.raises(StalePlan):
        apply_plan(state, plan)


def test_apply_is_all_or_nothing():
    state = _example_state()
    plan = plan_hub_rebalance(hub_input_from_state(state, 100, 100))
    state.channel(0, 2).set_balance(2, 121)
    snap = state.snapshot()
    with pytest.raises(StalePlan):
        apply_plan(state, plan)
    assert state.snapshot() == snap


def test_circular_plan_on_state():
    state = fund_network(build_multi_hub(2, 2), client_msat=1000, hub_msat=1000, link_msat=1000)
    state.channels["0-2"].balance_a, state.channels["0-2"].balance_b = 10, 1000
    state.channels["0-1"].balance_a, state.channels["0-1"].balance_b = 1000, 100
    inp = circular_input_from_state(state, [0, 2, 1], 20)
    assert inp.forward == [10, 1000, 100]
    plan = plan_circular_rebalance(inp)
    total = sum(ch.capacity for ch in state.channels.values())
    apply_plan(state, plan)
    assert state.channel(0, 2).balance_of(0) == 20
    assert state.channel(0, 1).balance_of(1) == 90
    assert sum(ch.capacity for ch in state.channels.values()) == total
    doc = plan_to_dict(plan)
    assert {"channel": "0-2", "from": 2, "to": 0, "amount_msat": 10} in doc["transfers"]


def test_plan_json_transfers():
    state = _example_state()
    doc = plan_to_dict(plan_hub_rebalance(hub_input_from_state(state, 100, 100)))
    assert doc["transfers"] == [
        {"channel": "0-1", "from": 0, "to": 1, "amount_msat": 50},
        {"channel": "0-2", "from": 2, "to": 0, "amount_msat": 20},
    ]


def test_greedy_never_beats_global():
    rng = random.Random(1)
    for _ in range(100):
        n = rng.randint(1, 3)
        inp = HubRebalanceInput([rng.randint(0, 200) for _ in range(n)],
                                [rng.randint(0, 200) for _ in range(n)],
                                rng.randint(0, 100), rng.randint(0, 300))
        try:
            greedy = plan_greedy_rebalance(inp)
        except InfeasibleError:
            continue
        assert plan_hub_rebalance(inp).objective <= greedy.objective


liq = st.integers(0, 200)


@st.composite
def hub_inputs(draw):
    n = draw(st.integers(1, 3))
    return HubRebalanceInput([draw(liq) for _ in range(n)], [draw(liq) for _ in range(n)],
                             draw(st.integers(0, 100)), draw(st.integers(0, 300)),
                             [float(draw(st.integers(0, 4))) for _ in range(n)])


@st.composite
def loops(draw):
    k = draw(st.integers(1, 3))
    fwd = [draw(liq) for _ in range(k + 2)]
    rev = draw(st.none() | st.lists(liq, min_size=k + 2, max_size=k + 2))
    return CircularInput(fwd, draw(st.integers(0, 100)), rev)


@given(hub_inputs())
@settings(max_examples=150, deadline=None)
def test_hub_plan_matches_oracle(inp):
    oracle = brute_force_oracle(inp)
    try:
        plan = plan_hub_rebalance(inp)
    except InfeasibleError:
        assert oracle is None
        return
    assert oracle is not None and plan.objective == pytest.approx(oracle, abs=1e-6)
    assert plan.y_aux == tuple(abs(v) for v in plan.x)
    for i, x in enumerate(plan.x):
        assert inp.client_side[i] + x >= inp.l_min and inp.hub_side[i] - x >= inp.l_min
        assert -x <= inp.client_side[i] and x <= inp.hub_side[i]
    assert sum(plan.x) <= inp.l_available


@given(hub_inputs(), st.integers(0, 200))
@settings(max_examples=100, deadline=None)
def test_more_budget_never_costs_more(inp, extra):
    try:
        base = plan_hub_rebalance(inp, tie_break=False).objective
    except InfeasibleError:
        return
    richer = HubRebalanceInput(inp.client_side, inp.hub_side, inp.l_min, inp.l_available + extra, inp.costs)
    assert plan_hub_rebalance(richer, tie_break=False).objective <= base + 1e-9


@given(loops())
@settings(max_examples=150, deadline=None)
def test_circular_plan_matches_oracle(inp):
    oracle = brute_force_oracle(inp)
    try:
        plan = plan_circular_rebalance(inp)
    except InfeasibleError:
        assert oracle is None
        return
    assert oracle is not None and plan.objective == pytest.approx(oracle, abs=1e-6)
    assert sum(plan.x) == plan.y
    assert min(plan.post) >= inp.l_min
    assert sum(plan.post) == sum(inp.forward)
    if inp.reverse is not None:
        assert all(p - f <= r for p, f, r in zip(plan.post, inp.forward, inp.reverse))


@given(st.lists(st.integers(0, 500), min_size=3, max_size=6), st.data())
@settings(max_examples=100, deadline=None)
def test_loop_total_conserved_for_any_transfers(fwd, data):
    k = len(fwd) - 2
    x = data.draw(st.lists(st.integers(-500, 500), min_size=k, max_size=k))
    y = data.draw(st.integers(-500, 500))
    assert sum(circular_post_state(fwd, x, y)) == sum(fwd)


def test_circular_lp_relaxation_is_a_lower_bound():
    inp = CircularInput([100, 40, 60, 10], 20)
    assert solve_lp(circular_lp(inp)).objective <= 20 + 1e-9
