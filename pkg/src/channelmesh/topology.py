"""
Network topologies for a closed payment network.

Three shapes are supported:

- ``complete``: every node has a direct channel to every other node,
  giving n(n-1)/2 channels.
- ``star``: one central hub (node 0) with a channel to each client,
  giving n-1 channels for n total nodes.
- ``multihub``: a central hub plus dormant standby hubs (tiers 1, 2, ...).
  Every hub has a channel to every client and the hubs are chained
  central -> tier 1 -> tier 2 ..., giving h*m + (h-1) channels.

Node ids are dense.  In hub topologies the central hub is node 0, dormant
hubs follow in tier order, then the clients.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Any, Iterator

import numpy as np

from .errors import InvalidArgument

NodeId = int


class Kind(str, enum.Enum):
    COMPLETE = "complete"
    STAR = "star"
    MULTIHUB = "multihub"


class Role(str, enum.Enum):
    CLIENT = "client"
    CENTRAL_HUB = "central_hub"
    DORMANT_HUB = "dormant_hub"


@dataclass(frozen=True)
class NodeRole:
    role: Role
    tier: int = 0

    @property
    def is_hub(self) -> bool:
        return self.role is not Role.CLIENT

    def to_dict(self, node: NodeId) -> dict[str, Any]:
        d: dict[str, Any] = {"id": node, "role": self.role.value}
        if self.role is Role.DORMANT_HUB:
            d["tier"] = self.tier
        return d


CLIENT = NodeRole(Role.CLIENT)
CENTRAL = NodeRole(Role.CENTRAL_HUB, 0)


def expected_edge_count(kind: Kind, clients: int, tiers: int = 1) -> int:
    """Closed-form channel count.  For ``complete`` the node count is ``clients``."""
    if kind is Kind.COMPLETE:
        return clients * (clients - 1) // 2
    if kind is Kind.STAR:
        return clients
    return tiers * clients + (tiers - 1)


class Topology:
    """Immutable node/edge set.

    ``edges`` is a read-only ``(E, 2)`` integer array with ``a < b`` per row.
    """

    __slots__ = ("kind", "roles", "edges", "_edge_set")

    def __init__(self, kind: Kind, roles: tuple[NodeRole, ...], edges: np.ndarray):
        raw = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        lo = np.minimum(raw[:, 0], raw[:, 1])
        hi = np.maximum(raw[:, 0], raw[:, 1])
        n = len(roles)
        if raw.size:
            if lo.min() < 0 or hi.max() >= n:
                raise InvalidArgument("edge references unknown node")
            if np.any(lo == hi):
                raise InvalidArgument("self-loop in edge list")
            keys = lo * n + hi
            steps = np.diff(keys)
            if np.any(steps <= 0):
                order = np.argsort(keys, kind="stable")
                lo, hi, keys = lo[order], hi[order], keys[order]
                steps = np.diff(keys)
            if np.any(steps == 0):
                raise InvalidArgument("duplicate edge")
        edges = np.column_stack((lo, hi))
        edges.flags.writeable = False
        object.__setattr__(self, "kind", Kind(kind))
        object.__setattr__(self, "roles", tuple(roles))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_edge_set", None)
        self._check_roles()

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("Topology is immutable")

    def _check_roles(self) -> None:
        central = [i for i, r in enumerate(self.roles) if r.role is Role.CENTRAL_HUB]
        tiers = sorted(r.tier for r in self.roles if r.role is Role.DORMANT_HUB)
        if self.kind is Kind.COMPLETE:
            if central or tiers:
                raise InvalidArgument("complete topology has no hubs")
            return
        if len(central) != 1:
            raise InvalidArgument("hub topology needs exactly one central hub")
        if tiers != list(range(1, len(tiers) + 1)):
            raise InvalidArgument("dormant hub tiers must be consecutive from 1")
        if self.kind is Kind.STAR and tiers:
            raise InvalidArgument("star topology has no dormant hubs")

    # -- queries -----------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.roles)

    def __len__(self) -> int:
        return len(self.roles)

    def nodes(self) -> Iterator[tuple[NodeId, NodeRole]]:
        return iter(enumerate(self.roles))

    @property
    def clients(self) -> list[NodeId]:
        return [i for i, r in enumerate(self.roles) if r.role is Role.CLIENT]

    @property
    def hubs(self) -> list[NodeId]:
        """Hubs ordered by tier: central first."""
        hubs = [i for i, r in enumerate(self.roles) if r.is_hub]
        return sorted(hubs, key=lambda i: self.roles[i].tier)

    @property
    def central_hub(self) -> NodeId | None:
        for i, r in enumerate(self.roles):
            if r.role is Role.CENTRAL_HUB:
                return i
        return None

    def hub_at_tier(self, tier: int) -> NodeId:
        for i in self.hubs:
            if self.roles[i].tier == tier:
                return i
        raise InvalidArgument(f"no hub at tier {tier}")

    def has_edge(self, a: NodeId, b: NodeId) -> bool:
        if self._edge_set is None:
            object.__setattr__(self, "_edge_set", {(int(u), int(v)) for u, v in self.edges})
        return (min(a, b), max(a, b)) in self._edge_set

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.node_count)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "nodes": [r.to_dict(i) for i, r in enumerate(self.roles)],
            "edges": self.edges.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Topology":
        try:
            nodes = sorted(d["nodes"], key=lambda n: n["id"])
            if [n["id"] for n in nodes] != list(range(len(nodes))):
                raise InvalidArgument("node ids must be dense from 0")
            roles = tuple(NodeRole(Role(n["role"]), int(n.get("tier", 0))) for n in nodes)
            return cls(Kind(d["kind"]), roles, np.array(d["edges"], dtype=np.int64))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"malformed topology document: {exc}") from exc

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self.kind is other.kind
            and self.roles == other.roles
            and np.array_equal(self.edges, other.edges)
        )

    def __repr__(self) -> str:
        return f"Topology({self.kind.value}, nodes={self.node_count}, edges={len(self.edges)})"


def build_complete(n: int) -> Topology:
    if n < 1:
        raise InvalidArgument("complete graph needs at least one node")
    a, b = np.triu_indices(n, k=1)
    return Topology(Kind.COMPLETE, (CLIENT,) * n, np.column_stack((a, b)))


def build_star(clients: int) -> Topology:
    if clients < 1:
        raise InvalidArgument("star needs at least one client")
    leaves = np.arange(1, clients + 1)
    edges = np.column_stack((np.zeros_like(leaves), leaves))
    return Topology(Kind.STAR, (CENTRAL,) + (CLIENT,) * clients, edges)


def build_multi_hub(clients: int, hub_tiers: int) -> Topology:
    """Central hub plus ``hub_tiers - 1`` dormant hubs, all connected to every client."""
    if clients < 1:
        raise InvalidArgument("multi-hub star needs at least one client")
    if hub_tiers < 1:
        raise InvalidArgument("multi-hub star needs at least one hub tier")
    roles = (CENTRAL,) + tuple(NodeRole(Role.DORMANT_HUB, t) for t in range(1, hub_tiers))
    roles += (CLIENT,) * clients
    hubs = np.arange(hub_tiers)
    leaves = np.arange(hub_tiers, hub_tiers + clients)
    hh, cc = np.meshgrid(hubs, leaves, indexing="ij")
    spokes = np.column_stack((hh.ravel(), cc.ravel()))
    chain = np.column_stack((hubs[:-1], hubs[1:]))
    return Topology(Kind.MULTIHUB, roles, np.vstack((spokes, chain)))


def build(kind: str | Kind, clients: int, tiers: int = 1) -> Topology:
    kind = Kind(kind)
    if kind is Kind.COMPLETE:
        return build_complete(clients)
    if kind is Kind.STAR:
        if tiers != 1:
            raise InvalidArgument("star topology has exactly one hub tier")
        return build_star(clients)
    return build_multi_hub(clients, tiers)


def edge_count(t: Topology) -> int:
    n = len(t.edges)
    hubs = len(t.hubs)
    clients = len(t.clients)
    expected = expected_edge_count(t.kind, t.node_count if t.kind is Kind.COMPLETE else clients, hubs)
    if n != expected:
        raise InvalidArgument(f"{t!r} has {n} edges, closed form gives {expected}")
    return n


def query_cost(t: Topology) -> int:
    """Channel queries needed to monitor the whole network.

    In a mesh every node polls each of its own channels (sum of degrees).
    In hub topologies only the hubs poll, each over its own channels.
    """
    deg = t.degrees()
    if t.kind is Kind.COMPLETE:
        return int(deg.sum())
    return int(sum(deg[h] for h in t.hubs))
