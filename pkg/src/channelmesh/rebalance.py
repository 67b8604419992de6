"""
Rebalancing planners.

Two planners are provided:

``plan_hub_rebalance``
    The hub pushes liquidity inside each of its client channels.  Transfer
    ``x_i > 0`` moves ``x_i`` msat from the hub's side to the client's side
    of channel ``i``.  The plan minimizes ``sum c_i |x_i|`` so that both
    sides end at or above ``l_min``, every side stays non-negative and the
    hub spends at most ``l_available`` in total.  ``|x_i|`` is linearized
    with auxiliary variables ``y_i >= x_i``, ``y_i >= -x_i``.

``plan_circular_rebalance``
    Liquidity is cycled around a loop CR -> P1 -> ... -> Pk -> DN -> CR.
    ``forward[e]`` is the sending side of loop edge ``e``.  Post-transfer
    liquidity is::

        L'[0]   = L[0] - x_1
        L'[j]   = L[j] + x_j - x_{j+1}       (1 <= j < k)
        L'[k]   = L[k] + x_k - y
        L'[k+1] = L[k+1] + y

    with ``sum x_i = y``, every ``L'[e] >= l_min`` and the objective
    ``sum |x_i| + |y|``.  Loop-total liquidity is conserved for any transfer
    vector.

Both planners return integral msat plans.  The LP relaxation is solved
first; fractional optima are resolved by branch and bound.  When several
optima exist the plan with the smallest L2 norm among the optimal vertices
found is returned, then the lexicographically smallest one.

``brute_force_oracle`` enumerates the integer grid independently of the LP
and is meant for tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

from .channels import ChannelId, NetworkState, channel_id
from .errors import InfeasibleError, InvalidArgument, ProblemTooLarge, StalePlan
from .lp import INF, LpProblem, LpResult, solve_lp
from .topology import NodeId, Role

INT_TOL = 1e-6


# --------------------------------------------------------------------------
# inputs and plans
# --------------------------------------------------------------------------


@dataclass
class HubRebalanceInput:
    client_side: list[int]
    hub_side: list[int]
    l_min: int
    l_available: int
    costs: list[float] | None = None
    channels: list[ChannelId] | None = None
    clients: list[NodeId] | None = None
    hub: NodeId | None = None

    def __post_init__(self):
        if len(self.client_side) != len(self.hub_side):
            raise InvalidArgument("client_side and hub_side differ in length")
        if self.costs is None:
            self.costs = [1.0] * len(self.client_side)
        if len(self.costs) != len(self.client_side):
            raise InvalidArgument("one cost per channel")
        if min([self.l_min, self.l_available, *self.client_side, *self.hub_side]) < 0:
            raise InvalidArgument("liquidity values must be non-negative")
        if any(c < 0 for c in self.costs):
            raise InvalidArgument("costs must be non-negative")

    @property
    def n(self) -> int:
        return len(self.client_side)

    def transfer_bounds(self, i: int) -> tuple[int, int]:
        """Integer interval for x_i implied by the per-channel constraints."""
        lo = max(self.l_min - self.client_side[i], -self.client_side[i])
        hi = min(self.hub_side[i] - self.l_min, self.hub_side[i])
        return lo, hi


@dataclass
class RebalancePlan:
    x: tuple[int, ...]
    y_aux: tuple[int, ...]
    objective: float
    channels: list[ChannelId] | None = None
    clients: list[NodeId] | None = None
    hub: NodeId | None = None
    pre: list[tuple[int, int]] = field(default_factory=list)

    def transfers(self) -> list[dict[str, Any]]:
        if self.channels is None:
            raise InvalidArgument("plan is not bound to channels")
        out = []
        for cid, client, x in zip(self.channels, self.clients, self.x):
            if x > 0:
                out.append({"channel": cid, "from": self.hub, "to": client, "amount_msat": x})
            elif x < 0:
                out.append({"channel": cid, "from": client, "to": self.hub, "amount_msat": -x})
        return out


@dataclass
class CircularInput:
    forward: list[int]
    l_min: int
    reverse: list[int] | None = None
    loop: list[NodeId] | None = None

    def __post_init__(self):
        if len(self.forward) < 3:
            raise InvalidArgument("a loop needs CR, at least one client and DN")
        if self.reverse is not None and len(self.reverse) != len(self.forward):
            raise InvalidArgument("reverse liquidity must match the loop length")
        if self.loop is not None and len(self.loop) != len(self.forward):
            raise InvalidArgument("loop node list must have one node per loop edge")
        vals = list(self.forward) + list(self.reverse or [])
        if self.l_min < 0 or min(vals) < 0:
            raise InvalidArgument("liquidity values must be non-negative")

    @property
    def k(self) -> int:
        return len(self.forward) - 2


@dataclass
class CircularPlan:
    x: tuple[int, ...]
    y: int
    objective: int
    pre: list[int]
    post: list[int]
    loop: list[NodeId] | None = None

    def transfers(self) -> list[dict[str, Any]]:
        if self.loop is None:
            raise InvalidArgument("plan is not bound to channels")
        out = []
        for e, (before, after) in enumerate(zip(self.pre, self.post)):
            u, v = self.loop[e], self.loop[(e + 1) % len(self.loop)]
            delta = after - before
            if delta < 0:
                out.append({"channel": channel_id(u, v), "from": u, "to": v, "amount_msat": -delta})
            elif delta > 0:
                out.append({"channel": channel_id(u, v), "from": v, "to": u, "amount_msat": delta})
        return out


Plan = Union[RebalancePlan, CircularPlan]


def circular_post_state(forward: Sequence[int], x: Sequence[int], y: int) -> list[int]:
    k = len(forward) - 2
    if len(x) != k:
        raise InvalidArgument(f"expected {k} transfers, got {len(x)}")
    post = [forward[0] - x[0]]
    for j in range(1, k):
        post.append(forward[j] + x[j - 1] - x[j])
    post.append(forward[k] + x[k - 1] - y)
    post.append(forward[k + 1] + y)
    return post


# --------------------------------------------------------------------------
# LP formulations
# --------------------------------------------------------------------------


def hub_lp(inp: HubRebalanceInput) -> LpProblem:
    """Variables ``[x_1..x_n, y_1..y_n]``."""
    n = inp.n
    lp = LpProblem(c=[0.0] * n + [float(c) for c in inp.costs],
                   bounds=[(-inp.client_side[i], inp.hub_side[i]) for i in range(n)]
                   + [(0.0, INF)] * n)

    def e(*pairs):
        row = [0.0] * (2 * n)
        for j, v in pairs:
            row[j] = v
        return row

    for i in range(n):
        lp.add(e((i, 1)), ">=", inp.l_min - inp.client_side[i])
        lp.add(e((i, -1)), ">=", inp.l_min - inp.hub_side[i])
        lp.add(e((n + i, 1), (i, -1)), ">=", 0)
        lp.add(e((n + i, 1), (i, 1)), ">=", 0)
    lp.add([1.0] * n + [0.0] * n, "<=", inp.l_available)
    return lp


def circular_lp(inp: CircularInput) -> LpProblem:
    """Variables ``[x_1..x_k, y, |x_1|..|x_k|, |y|]``."""
    k = inp.k
    nv = 2 * (k + 1)
    lp = LpProblem(c=[0.0] * (k + 1) + [1.0] * (k + 1),
                   bounds=[(-INF, INF)] * (k + 1) + [(0.0, INF)] * (k + 1))
    Y = k

    # change of each loop edge's liquidity as a row over the variables
    deltas = []
    d = [0.0] * nv
    d[0] = -1.0
    deltas.append(d)
    for j in range(1, k):
        d = [0.0] * nv
        d[j - 1], d[j] = 1.0, -1.0
        deltas.append(d)
    d = [0.0] * nv
    d[k - 1], d[Y] = 1.0, -1.0
    deltas.append(d)
    d = [0.0] * nv
    d[Y] = 1.0
    deltas.append(d)

    for e, row in enumerate(deltas):
        lp.add(row, ">=", inp.l_min - inp.forward[e])
        if inp.reverse is not None:
            lp.add(row, "<=", inp.reverse[e])
    eq = [0.0] * nv
    for j in range(k):
        eq[j] = 1.0
    eq[Y] = -1.0
    lp.add(eq, "=", 0.0)
    for j in range(k + 1):
        for s in (1.0, -1.0):
            row = [0.0] * nv
            row[k + 1 + j] = 1.0
            row[j] = -s
            lp.add(row, ">=", 0.0)
    return lp


# --------------------------------------------------------------------------
# integer solving and tie-breaking
# --------------------------------------------------------------------------


def _is_integral(v: float) -> bool:
    return abs(v - round(v)) <= INT_TOL * max(1.0, abs(v))


def _branch_and_bound(lp: LpProblem, int_vars: Sequence[int]) -> tuple[LpResult | None, bool]:
    """Best LP solution with ``int_vars`` integral.  Second item: no branching happened."""
    best: LpResult | None = None
    branched = False
    stack = [lp]
    while stack:
        node = stack.pop()
        res = solve_lp(node)
        if not res.optimal:
            continue
        if best is not None and res.objective >= best.objective - 1e-9 * max(1.0, abs(best.objective)):
            continue
        frac = next((j for j in int_vars if not _is_integral(res.x[j])), None)
        if frac is None:
            best = res
            continue
        branched = True
        v = res.x[frac]
        lo, hi = node.bounds[frac]
        up = node.copy()
        up.bounds[frac] = (math.ceil(v), hi)
        down = node.copy()
        down.bounds[frac] = (lo, math.floor(v))
        stack.extend([up, down])
    return best, not branched


def _canonical_optimum(lp: LpProblem, int_vars: Sequence[int], key_vars: Sequence[int],
                       exact_objective, feasible, tie_break: bool = True) -> list[int] | None:
    """Integral optimum of ``lp`` restricted to ``key_vars``, deterministically tie-broken.

    ``exact_objective`` and ``feasible`` evaluate integer key vectors in
    exact arithmetic; they guard against float drift in the LP.
    """
    base, clean = _branch_and_bound(lp, int_vars)
    if base is None:
        return None
    first = [int(round(base.x[j])) for j in key_vars]
    if not feasible(first):
        raise ArithmeticError("rounded LP optimum violates the integer constraints")
    if not tie_break or (clean and base.unique):
        return first

    z = exact_objective(first)
    capped = lp.copy()
    capped.add(lp.c, "<=", base.objective + 1e-7 * max(1.0, abs(base.objective)))
    candidates = [first]
    for j in key_vars:
        for s in (1.0, -1.0):
            probe = capped.copy()
            probe.c = [0.0] * lp.n
            probe.c[j] = s
            res, _ = _branch_and_bound(probe, int_vars)
            if res is None:
                continue
            cand = [int(round(res.x[i])) for i in key_vars]
            if feasible(cand):
                candidates.append(cand)
    zs = [exact_objective(c) for c in candidates]
    z = min(zs)
    tied = [c for c, zc in zip(candidates, zs) if zc <= z + 1e-9 * max(1.0, abs(z))]
    return min(tied, key=lambda v: (sum(t * t for t in v), v))


def _hub_objective(inp: HubRebalanceInput, x: Sequence[int]) -> float:
    return float(sum(c * abs(v) for c, v in zip(inp.costs, x)))


def _hub_feasible(inp: HubRebalanceInput, x: Sequence[int]) -> bool:
    for i, v in enumerate(x):
        lo, hi = inp.transfer_bounds(i)
        if not lo <= v <= hi:
            return False
    return sum(x) <= inp.l_available


def plan_hub_rebalance(inp: HubRebalanceInput, tie_break: bool = True) -> RebalancePlan:
    """Minimum-cost hub push plan.  Raises ``InfeasibleError`` when none exists."""
    n = inp.n
    x = _canonical_optimum(
        hub_lp(inp), int_vars=range(n), key_vars=range(n),
        exact_objective=lambda v: _hub_objective(inp, v),
        feasible=lambda v: _hub_feasible(inp, v),
        tie_break=tie_break,
    )
    if x is None:
        raise InfeasibleError("no hub transfer vector meets l_min within l_available")
    return RebalancePlan(
        x=tuple(x), y_aux=tuple(abs(v) for v in x), objective=_hub_objective(inp, x),
        channels=inp.channels, clients=inp.clients, hub=inp.hub,
        pre=list(zip(inp.client_side, inp.hub_side)),
    )


def plan_greedy_rebalance(inp: HubRebalanceInput) -> RebalancePlan:
    """Per-channel baseline: each channel takes its own cheapest fix in isolation.

    Channels are handled in order, each moving the least liquidity that
    restores its own minimum, without looking at the others.  Fails when
    the hub budget runs out.
    """
    budget = inp.l_available
    x = []
    for i in range(inp.n):
        lo, hi = inp.transfer_bounds(i)
        if lo > hi:
            raise InfeasibleError(f"channel {i} cannot satisfy l_min on both sides")
        v = min(max(0, lo), hi)
        if v > 0:
            if v > budget:
                raise InfeasibleError("greedy plan exhausted the hub budget")
            budget -= v
        x.append(v)
    if sum(x) > inp.l_available:
        raise InfeasibleError("greedy plan exceeds the hub budget")
    return RebalancePlan(
        x=tuple(x), y_aux=tuple(abs(v) for v in x), objective=_hub_objective(inp, x),
        channels=inp.channels, clients=inp.clients, hub=inp.hub,
        pre=list(zip(inp.client_side, inp.hub_side)),
    )


def _circular_feasible(inp: CircularInput, v: Sequence[int]) -> bool:
    x, y = v[:-1], v[-1]
    if sum(x) != y:
        return False
    post = circular_post_state(inp.forward, x, y)
    if any(p < inp.l_min for p in post):
        return False
    if inp.reverse is not None:
        for e, p in enumerate(post):
            if p - inp.forward[e] > inp.reverse[e]:
                return False
    return True


def plan_circular_rebalance(inp: CircularInput, tie_break: bool = True) -> CircularPlan:
    k = inp.k
    v = _canonical_optimum(
        circular_lp(inp), int_vars=range(k + 1), key_vars=range(k + 1),
        exact_objective=lambda t: sum(abs(a) for a in t),
        feasible=lambda t: _circular_feasible(inp, t),
        tie_break=tie_break,
    )
    if v is None:
        raise InfeasibleError("no loop transfer vector meets l_min on every edge")
    x, y = tuple(v[:-1]), v[-1]
    post = circular_post_state(inp.forward, x, y)
    return CircularPlan(x=x, y=y, objective=sum(abs(a) for a in v),
                        pre=list(inp.forward), post=post, loop=inp.loop)


# --------------------------------------------------------------------------
# state adapters
# --------------------------------------------------------------------------


def needs_rebalance(state: NetworkState, l_min: int) -> list[tuple[ChannelId, NodeId, int]]:
    """Every (channel, side) whose balance is below ``l_min``."""
    out = []
    for cid, ch in sorted(state.channels.items()):
        if ch.balance_a < l_min:
            out.append((cid, ch.a, ch.balance_a))
        if ch.balance_b < l_min:
            out.append((cid, ch.b, ch.balance_b))
    return out


def hub_input_from_state(state: NetworkState, l_min: int, l_available: int | None = None,
                         costs: dict[ChannelId, float] | None = None) -> HubRebalanceInput:
    hub = state.active_hub
    if hub is None:
        raise InvalidArgument("hub rebalancing needs a hub topology")
    roles = state.topology.roles
    chans, clients, cs, hs = [], [], [], []
    for cid, ch in sorted(state.channels.items(), key=lambda kv: (kv[1].a, kv[1].b)):
        if hub not in (ch.a, ch.b):
            continue
        client = ch.other(hub)
        if roles[client].role is not Role.CLIENT:
            continue
        chans.append(cid)
        clients.append(client)
        cs.append(ch.balance_of(client))
        hs.append(ch.balance_of(hub))
    if l_available is None:
        l_available = sum(hs)
    cost_list = [float((costs or {}).get(c, 1.0)) for c in chans]
    return HubRebalanceInput(cs, hs, l_min, l_available, cost_list, chans, clients, hub)


def loop_edges(loop: Sequence[NodeId]) -> list[tuple[NodeId, NodeId]]:
    return [(loop[e], loop[(e + 1) % len(loop)]) for e in range(len(loop))]


def circular_input_from_state(state: NetworkState, loop: Sequence[NodeId], l_min: int) -> CircularInput:
    """Loop is ``[CR, P1, ..., Pk, DN]``; the closing edge DN -> CR is implied."""
    fwd, rev = [], []
    for u, v in loop_edges(loop):
        ch = state.channel(u, v)
        fwd.append(ch.balance_of(u))
        rev.append(ch.balance_of(v))
    return CircularInput(fwd, l_min, rev, list(loop))


def apply_plan(state: NetworkState, plan: Plan) -> NetworkState:
    """Shift channel balances per ``plan``.  All-or-nothing; raises ``StalePlan``."""
    if isinstance(plan, RebalancePlan):
        if plan.channels is None:
            raise InvalidArgument("plan is not bound to channels")
        updates = []
        for cid, client, (c0, h0), x in zip(plan.channels, plan.clients, plan.pre, plan.x):
            ch = state.channels.get(cid)
            if ch is None:
                raise StalePlan(f"channel {cid} is closed")
            if (ch.balance_of(client), ch.balance_of(plan.hub)) != (c0, h0):
                raise StalePlan(f"channel {cid} changed since planning")
            if c0 + x < 0 or h0 - x < 0:
                raise InvalidArgument(f"plan drives {cid} negative")
            updates.append((ch, client, c0 + x))
    elif isinstance(plan, CircularPlan):
        if plan.loop is None:
            raise InvalidArgument("plan is not bound to channels")
        updates = []
        for (u, v), before, after in zip(loop_edges(plan.loop), plan.pre, plan.post):
            ch = state.channels.get(channel_id(u, v))
            if ch is None:
                raise StalePlan(f"channel {channel_id(u, v)} is closed")
            if ch.balance_of(u) != before:
                raise StalePlan(f"channel {ch.id} changed since planning")
            if not 0 <= after <= ch.capacity:
                raise InvalidArgument(f"plan drives {ch.id} negative")
            updates.append((ch, u, after))
    else:
        raise InvalidArgument(f"unknown plan type {type(plan).__name__}")
    for ch, node, value in updates:
        ch.set_balance(node, value)
    return state


def plan_to_dict(plan: Plan) -> dict[str, Any]:
    if isinstance(plan, RebalancePlan):
        d = {"mode": "lp", "x": list(plan.x), "objective": plan.objective}
    else:
        d = {"mode": "circular", "loop": plan.loop, "x": list(plan.x), "y": plan.y,
             "objective": plan.objective, "post": plan.post}
    d["transfers"] = plan.transfers()
    return d


# --------------------------------------------------------------------------
# brute-force oracle
# --------------------------------------------------------------------------


def _grid(lo: float, hi: float, step: int) -> np.ndarray:
    start = math.ceil(lo / step) * step
    if start > hi:
        return np.zeros(0, dtype=np.int64)
    return np.arange(start, math.floor(hi / step) * step + 1, step, dtype=np.int64)


def _head_product(axes: list[np.ndarray], max_points: int) -> np.ndarray:
    size = 1
    for a in axes:
        size *= a.size
    if size > max_points:
        raise ProblemTooLarge(f"grid has {size} points, limit {max_points}")
    if not axes:
        return np.zeros((1, 0), dtype=np.int64)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _oracle_hub(inp: HubRebalanceInput, step: int, max_points: int) -> float | None:
    costs = np.asarray(inp.costs, dtype=float)
    axes = []
    for i in range(inp.n):
        g = np.arange(-inp.client_side[i], inp.hub_side[i] + 1, dtype=np.int64)
        g = g[g % step == 0]
        keep = (inp.client_side[i] + g >= inp.l_min) & (inp.hub_side[i] - g >= inp.l_min)
        axes.append(g[keep])
        if not axes[-1].size:
            return None
    head = _head_product(axes[:-1], max_points)
    head_sum = head.sum(axis=1)
    head_cost = (np.abs(head) * costs[:-1]).sum(axis=1)
    order = np.argsort(head_sum, kind="stable")
    head_sum, head_cost = head_sum[order], np.minimum.accumulate(head_cost[order])
    # for every value of the last transfer, cheapest head whose sum fits the budget
    last = axes[-1]
    idx = np.searchsorted(head_sum, inp.l_available - last, side="right") - 1
    ok = idx >= 0
    if not ok.any():
        return None
    total = head_cost[idx[ok]] + costs[-1] * np.abs(last[ok])
    return float(total.min())


def _oracle_circular(inp: CircularInput, step: int, max_points: int) -> float | None:
    k, L, m = inp.k, inp.forward, inp.l_min
    lb = [m - v for v in L]
    # every edge change d_e >= lb_e and the changes sum to zero, so
    # x_j = -(d_0 + .. + d_{j-1}) = d_j + .. + d_{k+1}
    axes = []
    for j in range(1, k):
        lo, hi = sum(lb[j:]), -sum(lb[:j])
        axes.append(_grid(lo, hi, step))
    head = _head_product(axes, max_points)
    s = head.sum(axis=1)

    def post(xk: np.ndarray) -> np.ndarray:
        cols = [head[:, j] for j in range(k - 1)] + [xk]
        y = s + xk
        p = [L[0] - cols[0]]
        for j in range(1, k):
            p.append(L[j] + cols[j - 1] - cols[j])
        p.append(L[k] + cols[k - 1] - y)
        p.append(L[k + 1] + y)
        return np.column_stack(p)

    # every constraint is affine in x_k: a + b*x_k >= 0
    p0, p1 = post(np.zeros_like(s)), post(np.ones_like(s))
    a = [p0 - m]
    b = [p1 - p0]
    if inp.reverse is not None:
        R = np.asarray(inp.reverse)
        base = np.asarray(L)
        a.append(R - (p0 - base))
        b.append(-(p1 - p0))
    a, b = np.hstack(a).astype(float), np.hstack(b).astype(float)
    lo = np.full(s.size, -np.inf)
    hi = np.full(s.size, np.inf)
    bad = np.zeros(s.size, dtype=bool)
    for col in range(a.shape[1]):
        ac, bc = a[:, col], b[:, col]
        pos, neg, zero = bc > 0, bc < 0, bc == 0
        lo[pos] = np.maximum(lo[pos], -ac[pos] / bc[pos])
        hi[neg] = np.minimum(hi[neg], -ac[neg] / bc[neg])
        bad |= zero & (ac < 0)
    lo = np.ceil(lo / step) * step
    hi = np.floor(hi / step) * step
    ok = ~bad & (lo <= hi) & np.isfinite(lo) & np.isfinite(hi)
    if not ok.any():
        return None
    head, s, lo, hi = head[ok], s[ok], lo[ok], hi[ok]
    # |x_k| + |s + x_k| is convex in x_k: the grid minimum sits at an endpoint
    # or at a grid point next to one of the kinks 0 and -s
    cands = [lo, hi]
    for kink in (np.zeros_like(s, dtype=float), -s.astype(float)):
        for rnd in (np.floor, np.ceil):
            cands.append(np.clip(rnd(kink / step) * step, lo, hi))
    head_cost = np.abs(head).sum(axis=1)
    best = np.full(s.size, np.inf)
    for xk in cands:
        best = np.minimum(best, head_cost + np.abs(xk) + np.abs(s + xk))
    return float(best.min())


def brute_force_oracle(problem: HubRebalanceInput | CircularInput, grid_step: int = 1,
                       max_points: int = 10**7) -> float | None:
    """Exhaustive minimum over transfer vectors on multiples of ``grid_step``.

    Returns ``None`` when no grid point is feasible.  All but the last
    coordinate are enumerated explicitly; the last one is scanned exactly
    using the structure of its feasible set.  Refuses (``ProblemTooLarge``)
    when the enumerated part exceeds ``max_points``.
    """
    if grid_step < 1:
        raise InvalidArgument("grid_step must be a positive integer")
    if isinstance(problem, HubRebalanceInput):
        return _oracle_hub(problem, grid_step, max_points)
    if isinstance(problem, CircularInput):
        return _oracle_circular(problem, grid_step, max_points)
    raise InvalidArgument(f"unsupported problem type {type(problem).__name__}")
