"""Exception types shared across channelmesh modules."""

from __future__ import annotations


class ChannelMeshError(Exception):
    """Base class for all channelmesh errors."""


class InvalidArgument(ChannelMeshError, ValueError):
    pass


class InvalidEdge(ChannelMeshError, ValueError):
    """A channel was requested between nodes that share no topology edge."""


class AlreadyExists(ChannelMeshError):
    pass


class NotFound(ChannelMeshError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "not found"


class StalePlan(ChannelMeshError):
    """A rebalance plan no longer matches the channel state it was computed for."""


class InfeasibleError(ChannelMeshError):
    """No transfer vector satisfies the rebalancing constraints."""


class ProblemTooLarge(ChannelMeshError):
    """The brute-force oracle refuses grids above its point budget."""


class InvalidTime(ChannelMeshError, ValueError):
    pass


class InvalidTrace(ChannelMeshError, ValueError):
    pass


class NetworkDown(ChannelMeshError):
    """No hub is left to route payments."""


class ValidationError(ChannelMeshError):
    """Scenario validation failure carrying every problem found.

    ``errors`` is a list of ``(json_pointer, message)`` pairs.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        lines = [f"{ptr or '/'}: {msg}" for ptr, msg in self.errors]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))
