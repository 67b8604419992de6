"""
Hub health monitoring and switchover to dormant standby hubs.

A hub is declared failed when more than ``failure_timeout_s`` has passed
since its last heartbeat.  Failure is absorbing: late heartbeats do not
revive a hub, only ``repair`` does.  On failure of the active hub the
lowest-tier dormant hub that is still alive takes over routing after an
activation delay.  Each dormant channel that is short of its mirror target
adds ``replenish_delay_s`` (one on-chain top-up) to that delay.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from typing import Any

from .channels import ChannelId, NetworkState, channel_id
from .errors import InvalidArgument, InvalidTime, NetworkDown
from .topology import NodeId, Role


class HubStatus(str, enum.Enum):
    HEALTHY = "healthy"
    SUSPECT = "suspect"
    FAILED = "failed"


@dataclass(frozen=True)
class FailoverPolicy:
    heartbeat_interval_s: float = 10.0
    failure_timeout_s: float = 30.0
    activation_delay_s: float = 5.0
    liquidity_mirror_ratio: float = 1.0
    replenish_delay_s: float = 600.0
    # missed-beat window before a hub is flagged suspect; off by default
    suspect_after_s: float | None = None

    def __post_init__(self):
        if self.heartbeat_interval_s <= 0:
            raise InvalidArgument("heartbeat_interval_s must be positive")
        if self.failure_timeout_s < self.heartbeat_interval_s:
            raise InvalidArgument("failure_timeout_s must be at least heartbeat_interval_s")
        if self.activation_delay_s < 0 or self.replenish_delay_s < 0:
            raise InvalidArgument("delays must be non-negative")
        if not 0.0 <= self.liquidity_mirror_ratio <= 1.0:
            raise InvalidArgument("liquidity_mirror_ratio must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> "FailoverPolicy":
        return cls(**(d or {}))


@dataclass(frozen=True)
class HubHealth:
    node: NodeId
    last_heartbeat: float = 0.0
    status: HubStatus = HubStatus.HEALTHY


def record_heartbeat(health: HubHealth, t: float) -> HubHealth:
    if t < health.last_heartbeat:
        raise InvalidTime(f"heartbeat at {t} precedes last heartbeat {health.last_heartbeat}")
    if health.status is HubStatus.FAILED:
        return replace(health, last_heartbeat=t)
    return replace(health, last_heartbeat=t, status=HubStatus.HEALTHY)


def evaluate(health: HubHealth, policy: FailoverPolicy, t: float) -> HubStatus:
    if health.status is HubStatus.FAILED:
        return HubStatus.FAILED
    silent = t - health.last_heartbeat
    if silent > policy.failure_timeout_s:
        return HubStatus.FAILED
    if policy.suspect_after_s is not None and silent > policy.suspect_after_s:
        return HubStatus.SUSPECT
    return HubStatus.HEALTHY


def check(health: HubHealth, policy: FailoverPolicy, t: float) -> HubHealth:
    """Evaluate and store the verdict."""
    return replace(health, status=evaluate(health, policy, t))


def repair(health: HubHealth, t: float) -> HubHealth:
    return HubHealth(health.node, max(t, health.last_heartbeat), HubStatus.HEALTHY)


@dataclass(frozen=True)
class Deficit:
    channel: ChannelId
    client: NodeId
    balance_msat: int
    target_msat: int

    @property
    def shortfall_msat(self) -> int:
        return self.target_msat - self.balance_msat


def readiness_check(state: NetworkState, policy: FailoverPolicy) -> dict[NodeId, list[Deficit]]:
    """Dormant-hub channels holding less than the mirror target.

    The target for dormant hub D and client C is ``mirror_ratio`` times the
    central hub's side of its channel with C.
    """
    topo = state.topology
    central = topo.central_hub
    ratio = Fraction(repr(policy.liquidity_mirror_ratio))
    report: dict[NodeId, list[Deficit]] = {}
    for hub in topo.hubs:
        if topo.roles[hub].role is not Role.DORMANT_HUB:
            continue
        found = []
        for client in topo.clients:
            primary = state.channels.get(channel_id(central, client))
            mirror = state.channels.get(channel_id(hub, client))
            if primary is None or mirror is None:
                continue
            target = math.ceil(ratio * primary.balance_of(central))
            have = mirror.balance_of(hub)
            if have < target:
                found.append(Deficit(mirror.id, client, have, target))
        report[hub] = found
    return report


@dataclass
class SwitchoverReport:
    failed_hub: NodeId
    activated_hub: NodeId
    detected_at: float
    active_at: float
    payments_rejected_during_window: int = 0
    deficit_channels: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def mark_hub_failed(state: NetworkState, hub: NodeId) -> None:
    state.failed_hubs.add(hub)
    if hub == state.active_hub:
        state.outage = True


def trigger_switchover(state: NetworkState, policy: FailoverPolicy, t: float) -> SwitchoverReport:
    """Hand routing from the failed active hub to the next live dormant tier.

    Balances are not touched.  The network stays in outage until
    ``complete_switchover`` is called at ``report.active_at``.
    """
    failed = state.active_hub
    if failed is None or failed not in state.failed_hubs:
        raise InvalidArgument("the active hub has not failed")
    topo = state.topology
    standby = [h for h in topo.hubs
               if topo.roles[h].role is Role.DORMANT_HUB and h not in state.failed_hubs]
    if not standby:
        state.outage = True
        raise NetworkDown(f"hub {failed} failed and no dormant tier remains")
    nxt = standby[0]
    deficits = len(readiness_check(state, policy).get(nxt, []))
    delay = policy.activation_delay_s + policy.replenish_delay_s * deficits
    state.active_hub = nxt
    state.outage = True
    return SwitchoverReport(failed, nxt, t, t + delay, deficit_channels=deficits)


def complete_switchover(state: NetworkState, report: SwitchoverReport) -> None:
    if state.active_hub == report.activated_hub and report.activated_hub not in state.failed_hubs:
        state.outage = False
