"""
Channel ledger for a closed payment network.

Channels are modeled as two integer balances in millisatoshi, one per
endpoint.  Off-chain operations move value between the two sides and
never change the capacity.  Payments between clients are forced through
the active hub (two hops); a direct channel, when one exists, is used as a
single hop.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import AlreadyExists, InvalidArgument, InvalidEdge, NotFound
from .topology import Kind, NodeId, Role, Topology

ChannelId = str
PPM = 1_000_000


def channel_id(a: NodeId, b: NodeId) -> ChannelId:
    return f"{min(a, b)}-{max(a, b)}"


@dataclass(frozen=True)
class FeePolicy:
    base_fee_msat: int = 0
    fee_rate_ppm: int = 0

    def __post_init__(self):
        if self.base_fee_msat < 0 or self.fee_rate_ppm < 0:
            raise InvalidArgument("fee parameters must be non-negative")
        if self.fee_rate_ppm > PPM:
            raise InvalidArgument("fee_rate_ppm must not exceed 1,000,000")

    def to_dict(self) -> dict[str, int]:
        return {"base_fee_msat": self.base_fee_msat, "fee_rate_ppm": self.fee_rate_ppm}

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> "FeePolicy":
        d = d or {}
        return cls(int(d.get("base_fee_msat", 0)), int(d.get("fee_rate_ppm", 0)))


ZERO_FEES = FeePolicy()


def fee_for_hop(policy: FeePolicy, amount: int) -> int:
    """Forwarding fee in msat: base fee plus the proportional part, floored."""
    if amount < 0:
        raise InvalidArgument("amount must be non-negative")
    return policy.base_fee_msat + amount * policy.fee_rate_ppm // PPM


@dataclass
class Channel:
    id: ChannelId
    a: NodeId
    b: NodeId
    balance_a: int
    balance_b: int
    policy_a: FeePolicy = ZERO_FEES
    policy_b: FeePolicy = ZERO_FEES

    @property
    def capacity(self) -> int:
        return self.balance_a + self.balance_b

    def other(self, node: NodeId) -> NodeId:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise InvalidArgument(f"node {node} is not an endpoint of {self.id}")

    def balance_of(self, node: NodeId) -> int:
        if node == self.a:
            return self.balance_a
        if node == self.b:
            return self.balance_b
        raise InvalidArgument(f"node {node} is not an endpoint of {self.id}")

    def policy_of(self, node: NodeId) -> FeePolicy:
        return self.policy_a if node == self.a else self.policy_b

    def set_balance(self, node: NodeId, value: int) -> None:
        """Set ``node``'s side, adjusting the other side so capacity is kept."""
        cap = self.capacity
        if not 0 <= value <= cap:
            raise InvalidArgument(f"balance {value} outside [0, {cap}] on {self.id}")
        if node == self.a:
            self.balance_a, self.balance_b = value, cap - value
        elif node == self.b:
            self.balance_b, self.balance_a = value, cap - value
        else:
            raise InvalidArgument(f"node {node} is not an endpoint of {self.id}")

    def push(self, payer: NodeId, amount: int) -> None:
        """Move ``amount`` from ``payer``'s side to the other side."""
        self.set_balance(payer, self.balance_of(payer) - amount)

    def to_dict(self) -> dict[str, Any]:
        return {
            "a": self.a,
            "b": self.b,
            "balance_a": self.balance_a,
            "balance_b": self.balance_b,
            "policy_a": self.policy_a.to_dict(),
            "policy_b": self.policy_b.to_dict(),
        }


class PaymentStatus(str, enum.Enum):
    SUCCESS = "success"
    FAILED_FIRST_HOP = "failed_first_hop"
    FAILED_SECOND_HOP = "failed_second_hop"
    NETWORK_DOWN = "network_down"
    HUB_UNREACHABLE = "hub_unreachable"


@dataclass(frozen=True)
class PaymentResult:
    status: PaymentStatus
    amount_msat: int
    fees_paid_msat: int = 0
    hops: tuple[ChannelId, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status is PaymentStatus.SUCCESS


@dataclass
class NetworkState:
    """Mutable world: topology, open channels and routing status.

    ``outage`` is set while the active hub is dead or being replaced;
    ``downtime`` is set during scheduled maintenance windows.
    """

    topology: Topology
    channels: dict[ChannelId, Channel] = field(default_factory=dict)
    active_hub: NodeId | None = None
    onchain_events: int = 0
    failed_hubs: set[NodeId] = field(default_factory=set)
    outage: bool = False
    downtime: bool = False

    def __post_init__(self):
        if self.active_hub is None:
            self.active_hub = self.topology.central_hub
        elif not self.topology.roles[self.active_hub].is_hub:
            raise InvalidArgument(f"active hub {self.active_hub} is not a hub")

    @property
    def available(self) -> bool:
        return not (self.outage or self.downtime)

    def channel(self, a: NodeId, b: NodeId) -> Channel:
        try:
            return self.channels[channel_id(a, b)]
        except KeyError:
            raise NotFound(f"no channel between {a} and {b}") from None

    def frozen(self, ch: Channel) -> bool:
        return ch.a in self.failed_hubs or ch.b in self.failed_hubs

    def snapshot(self) -> tuple:
        """Hashable image of every mutable field, for atomicity checks."""
        chans = tuple(
            (cid, c.a, c.b, c.balance_a, c.balance_b, c.policy_a, c.policy_b)
            for cid, c in sorted(self.channels.items())
        )
        return (chans, self.active_hub, self.onchain_events,
                tuple(sorted(self.failed_hubs)), self.outage, self.downtime)

    def total_capacity(self) -> int:
        return sum(c.capacity for c in self.channels.values())

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "topology": self.topology.to_dict(),
            "active_hub": self.active_hub,
            "onchain_events": self.onchain_events,
            "failed_hubs": sorted(self.failed_hubs),
            "channels": {cid: c.to_dict() for cid, c in sorted(self.channels.items())},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkState":
        topo = Topology.from_dict(d["topology"])
        state = cls(topo, active_hub=d.get("active_hub"),
                    onchain_events=int(d.get("onchain_events", 0)),
                    failed_hubs=set(d.get("failed_hubs", [])))
        for cid, c in d.get("channels", {}).items():
            a, b = int(c["a"]), int(c["b"])
            if cid != channel_id(a, b):
                raise InvalidArgument(f"channel key {cid!r} does not match endpoints {a}-{b}")
            if not topo.has_edge(a, b):
                raise InvalidEdge(f"{cid} is not a topology edge")
            ba, bb = int(c["balance_a"]), int(c["balance_b"])
            if ba < 0 or bb < 0:
                raise InvalidArgument(f"negative balance on {cid}")
            state.channels[cid] = Channel(cid, a, b, ba, bb,
                                          FeePolicy.from_dict(c.get("policy_a")),
                                          FeePolicy.from_dict(c.get("policy_b")))
        return state


def open_channel(
    state: NetworkState,
    a: NodeId,
    b: NodeId,
    fund_a: int,
    fund_b: int = 0,
    policy_a: FeePolicy = ZERO_FEES,
    policy_b: FeePolicy = ZERO_FEES,
) -> ChannelId:
    if fund_a < 0 or fund_b < 0:
        raise InvalidArgument("channel funding must be non-negative")
    if a == b or not state.topology.has_edge(a, b):
        raise InvalidEdge(f"({a}, {b}) is not an edge of the topology")
    cid = channel_id(a, b)
    if cid in state.channels:
        raise AlreadyExists(f"channel {cid} already open")
    state.channels[cid] = Channel(cid, a, b, fund_a, fund_b, policy_a, policy_b)
    state.onchain_events += 1
    return cid


def close_channel(state: NetworkState, cid: ChannelId) -> tuple[int, int]:
    """Settle a channel on chain.  Returns the final (balance_a, balance_b)."""
    try:
        ch = state.channels.pop(cid)
    except KeyError:
        raise NotFound(f"channel {cid} not found") from None
    state.onchain_events += 1
    return ch.balance_a, ch.balance_b


def route(state: NetworkState, sender: NodeId, receiver: NodeId) -> list[Channel]:
    """Channels a payment crosses: the direct channel if any, else via the active hub."""
    direct = state.channels.get(channel_id(sender, receiver))
    if direct is not None:
        return [direct]
    hub = state.active_hub
    if hub is None or state.topology.kind is Kind.COMPLETE:
        raise InvalidEdge(f"no channel between {sender} and {receiver}")
    try:
        return [state.channel(sender, hub), state.channel(hub, receiver)]
    except NotFound:
        raise InvalidEdge(f"no route from {sender} to {receiver} via hub {hub}") from None


def execute_payment(state: NetworkState, sender: NodeId, receiver: NodeId, amount: int) -> PaymentResult:
    """Pay ``amount`` msat from ``sender`` to ``receiver``.

    Atomic: a failed payment leaves the state untouched.  Two-hop payments
    pay the hub's forwarding fee on the first hop; the fee stays on the
    hub's side of the sender's channel.
    """
    if sender == receiver:
        raise InvalidArgument("sender and receiver must differ")
    if amount < 0:
        raise InvalidArgument("amount must be non-negative")
    n = state.topology.node_count
    if not (0 <= sender < n and 0 <= receiver < n):
        raise InvalidArgument("unknown node")
    if not state.available:
        return PaymentResult(PaymentStatus.NETWORK_DOWN, amount)

    hops = route(state, sender, receiver)
    ids = tuple(c.id for c in hops)
    if any(state.frozen(c) for c in hops):
        return PaymentResult(PaymentStatus.NETWORK_DOWN, amount, 0, ids)

    if len(hops) == 1:
        ch = hops[0]
        if ch.balance_of(sender) < amount:
            return PaymentResult(PaymentStatus.FAILED_FIRST_HOP, amount, 0, ids)
        ch.push(sender, amount)
        return PaymentResult(PaymentStatus.SUCCESS, amount, 0, ids)

    first, second = hops
    hub = first.other(sender)
    fee = fee_for_hop(first.policy_of(hub), amount)
    if first.balance_of(sender) < amount + fee:
        return PaymentResult(PaymentStatus.FAILED_FIRST_HOP, amount, 0, ids)
    if second.balance_of(hub) < amount:
        return PaymentResult(PaymentStatus.FAILED_SECOND_HOP, amount, 0, ids)
    first.push(sender, amount + fee)
    second.push(hub, amount)
    return PaymentResult(PaymentStatus.SUCCESS, amount, fee, ids)


def fund_network(
    topology: Topology,
    client_msat: int,
    hub_msat: int,
    dormant_msat: int | None = None,
    link_msat: int | None = None,
    hub_policy: FeePolicy = ZERO_FEES,
    client_policy: FeePolicy = ZERO_FEES,
) -> NetworkState:
    """Open a channel on every topology edge with uniform funding.

    Hub-client channels get ``client_msat`` on the client side and
    ``hub_msat`` (central) or ``dormant_msat`` (dormant tiers) on the hub
    side.  Hub-hub links get ``link_msat`` per side.  In a mesh every side
    gets ``client_msat``.
    """
    state = NetworkState(topology)
    roles = topology.roles
    dormant_msat = hub_msat if dormant_msat is None else dormant_msat
    link_msat = hub_msat if link_msat is None else link_msat

    def side(node: NodeId, peer: NodeId) -> tuple[int, FeePolicy]:
        r = roles[node]
        if r.role is Role.CLIENT:
            return client_msat, client_policy
        if roles[peer].is_hub:
            return link_msat, hub_policy
        return (hub_msat if r.role is Role.CENTRAL_HUB else dormant_msat), hub_policy

    for a, b in topology.edges.tolist():
        fa, pa = side(a, b)
        fb, pb = side(b, a)
        open_channel(state, a, b, fa, fb, pa, pb)
    return state
