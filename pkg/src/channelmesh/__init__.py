"""Closed hub-and-spoke payment channel networks: topology, liquidity, rebalancing, failover, simulation."""

from __future__ import annotations

__version__ = "0.1.0"

from .channels import FeePolicy, NetworkState, execute_payment, fee_for_hop, fund_network
from .failover import FailoverPolicy, SwitchoverReport, trigger_switchover
from .rebalance import (
    CircularInput,
    HubRebalanceInput,
    apply_plan,
    brute_force_oracle,
    plan_circular_rebalance,
    plan_hub_rebalance,
)
from .sim import SimConfig, SimReport, run_simulation, workload_replay
from .topology import build_complete, build_multi_hub, build_star, edge_count, query_cost

__all__ = [
    "CircularInput", "FailoverPolicy", "FeePolicy", "HubRebalanceInput", "NetworkState",
    "SimConfig", "SimReport", "SwitchoverReport", "apply_plan", "brute_force_oracle",
    "build_complete", "build_multi_hub", "build_star", "edge_count", "execute_payment",
    "fee_for_hop", "fund_network", "plan_circular_rebalance", "plan_hub_rebalance",
    "query_cost", "run_simulation", "trigger_switchover", "workload_replay",
]
