"""
Discrete-event throughput simulation of a hub-routed payment network.

The engine models one payment server at the active hub.  In saturation
mode a new payment is ready the instant the previous one finishes, so the
run measures capacity.  Each payment takes ``payment_service_time_s`` of
uptime; while the network is down (scheduled rebalancing windows, hub
outages) the payment in progress is held and resumes afterwards.  Under
unlimited liquidity and no failures this gives exactly::

    completed = floor((duration - downtime) / service_time)

Rebalancing windows of ``rebalance_downtime_s`` start at every multiple of
``rebalance_interval_s`` (from t=0) that leaves a complete interval before
the end of the run.

With ``fast_forward`` the engine jumps over saturated uptime in closed
form, applying the aggregate ledger effect of the skipped payments when
every channel side can cover its gross debits; otherwise it steps the
payments one by one.  With ``fast_forward=False`` every completion is a
queued event.  Both paths produce identical reports and ledgers.

Simulated time is kept in integer microseconds.
"""

from __future__ import annotations

import logging
import math
import random
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Sequence

from .channels import (
    FeePolicy,
    NetworkState,
    PaymentStatus,
    execute_payment,
    fee_for_hop,
    fund_network,
    route,
)
from .errors import InvalidArgument, InvalidTrace, NetworkDown
from .events import EventKind, EventQueue
from .failover import (
    FailoverPolicy,
    HubHealth,
    SwitchoverReport,
    check,
    complete_switchover,
    mark_hub_failed,
    record_heartbeat,
    trigger_switchover,
)
from .rebalance import InfeasibleError, apply_plan, hub_input_from_state, plan_hub_rebalance
from .topology import Kind, build

log = logging.getLogger(__name__)

US = 1_000_000
DAY_S = 86_400
DAY_US = DAY_S * US
WORKLOAD_SEED_OFFSET = 1

PRESETS: dict[str, dict[str, Any]] = {
    # effective 1.0 s per payment reproduces the published completion counts
    "table1": {"payment_service_time_s": 1.0},
    # two hops at the stated per-transaction time
    "two_hop": {"payment_service_time_s": None},
}


def _us(seconds: float) -> int:
    return int(round(seconds * US))


@dataclass
class SimConfig:
    duration_s: float
    clients: int = 100
    topology: str = "star"
    hub_tiers: int = 1
    tx_processing_time_s: float = 0.3
    payment_service_time_s: float = 1.0
    rebalance_interval_s: float = float(DAY_S)
    rebalance_downtime_s: float = 3600.0
    failure_injections: list[tuple[float, int]] = field(default_factory=list)
    seed: int = 0
    base_fee_msat: int = 0
    fee_rate_ppm: int = 0
    client_funding_msat: int = 10**11
    hub_funding_msat: int = 10**11
    dormant_funding_msat: int | None = None
    hub_link_funding_msat: int | None = None
    payment_amount_msat: int = 100_000
    rebalance_l_min_msat: int | None = None
    rebalance_budget_msat: int | None = None
    failover: FailoverPolicy = field(default_factory=FailoverPolicy)
    fast_forward: bool = True
    name: str = "sim"

    def __post_init__(self):
        if isinstance(self.failover, dict):
            self.failover = FailoverPolicy.from_dict(self.failover)
        self.failure_injections = [(float(t), int(k)) for t, k in self.failure_injections]
        errs = self.problems()
        if errs:
            raise InvalidArgument("; ".join(f"{k}: {v}" for k, v in errs))

    def problems(self) -> list[tuple[str, str]]:
        out = []
        if not self.duration_s > 0:
            out.append(("duration_s", "must be positive"))
        for key in ("tx_processing_time_s", "payment_service_time_s", "rebalance_interval_s"):
            if not getattr(self, key) > 0:
                out.append((key, "must be positive"))
        if self.rebalance_downtime_s < 0:
            out.append(("rebalance_downtime_s", "must be non-negative"))
        elif self.rebalance_downtime_s >= self.rebalance_interval_s:
            out.append(("rebalance_downtime_s", "must be shorter than rebalance_interval_s"))
        if self.clients < 2:
            out.append(("clients", "need at least two clients to pay each other"))
        if self.topology not in {k.value for k in Kind}:
            out.append(("topology", f"unknown kind {self.topology!r}"))
        elif self.topology == "star" and self.hub_tiers != 1:
            out.append(("hub_tiers", "a star has exactly one hub tier"))
        elif self.topology == "complete" and self.failure_injections:
            out.append(("failure_injections", "a mesh has no hub to fail"))
        if self.hub_tiers < 1:
            out.append(("hub_tiers", "must be at least 1"))
        for i, (t, tier) in enumerate(self.failure_injections):
            if not 0 <= t < self.duration_s:
                out.append((f"failure_injections/{i}", "time outside the run"))
            if not 0 <= tier < self.hub_tiers:
                out.append((f"failure_injections/{i}", f"no hub at tier {tier}"))
        for key in ("client_funding_msat", "hub_funding_msat", "payment_amount_msat",
                    "base_fee_msat", "fee_rate_ppm"):
            if getattr(self, key) < 0:
                out.append((key, "must be non-negative"))
        for key in ("payment_service_time_s", "duration_s", "rebalance_interval_s",
                    "rebalance_downtime_s"):
            v = getattr(self, key)
            if v > 0 and abs(_us(v) - v * US) > 1e-3:
                out.append((key, "finer than microsecond resolution"))
        return out

    @property
    def hub_policy(self) -> FeePolicy:
        return FeePolicy(self.base_fee_msat, self.fee_rate_ppm)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["failure_injections"] = [list(x) for x in self.failure_injections]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SimConfig":
        d = dict(d)
        preset = d.pop("preset", None)
        if preset is not None:
            if preset not in PRESETS:
                raise InvalidArgument(f"unknown preset {preset!r}")
            for k, v in PRESETS[preset].items():
                if k == "payment_service_time_s" and v is None:
                    v = 2 * float(d.get("tx_processing_time_s", 0.3))
                d.setdefault(k, v)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidArgument(f"unknown config keys: {', '.join(unknown)}")
        if "duration_s" not in d:
            raise InvalidArgument("duration_s is required")
        return cls(**d)


@dataclass
class SimReport:
    scenario: str
    duration_s: float
    clients: int
    payments_issued: int = 0
    payments_completed: int = 0
    payments_failed: dict[str, int] = field(default_factory=dict)
    in_flight: int = 0
    total_downtime_s: float = 0.0
    rebalance_downtime_s: float = 0.0
    outage_s: float = 0.0
    rebalances_executed: int = 0
    rebalance_plans_applied: int = 0
    rebalance_plans_infeasible: int = 0
    fees_collected_msat: int = 0
    network_down: bool = False
    switchovers: list[SwitchoverReport] = field(default_factory=list)
    per_day_completed: list[int] = field(default_factory=list)
    payment_log: list[dict[str, Any]] | None = None

    @property
    def payments_failed_total(self) -> int:
        return sum(self.payments_failed.values())

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["payments_failed"] = dict(sorted(self.payments_failed.items()))
        d["switchovers"] = [s.to_dict() for s in self.switchovers]
        if self.payment_log is None:
            del d["payment_log"]
        return d


def build_network(cfg: SimConfig) -> NetworkState:
    topo = build(cfg.topology, cfg.clients, cfg.hub_tiers)
    dormant = cfg.dormant_funding_msat
    if dormant is None:
        ratio = cfg.failover.liquidity_mirror_ratio
        dormant = math.ceil(cfg.hub_funding_msat * ratio)
    return fund_network(
        topo,
        client_msat=cfg.client_funding_msat,
        hub_msat=cfg.hub_funding_msat,
        dormant_msat=dormant,
        link_msat=cfg.hub_link_funding_msat,
        hub_policy=cfg.hub_policy,
    )


class Simulation:
    def __init__(self, cfg: SimConfig, state: NetworkState | None = None,
                 trace: Sequence[tuple[float, int, int, int]] | None = None):
        self.cfg = cfg
        self.state = state if state is not None else build_network(cfg)
        self.topo = self.state.topology
        self.saturate = trace is None
        self.q = EventQueue()
        self.D = _us(cfg.duration_s)
        self.s = _us(cfg.payment_service_time_s)
        self.policy = cfg.failover
        self.health = {h: HubHealth(h) for h in self.topo.hubs}

        order = list(self.topo.clients)
        random.Random(cfg.seed + WORKLOAD_SEED_OFFSET).shuffle(order)
        self.order = order
        self.m = len(order)

        self.now = 0
        self.cur_j: int | None = None  # payment in service
        self.work_left = 0
        self.done_at: int | None = None
        self.gen = 0
        self.down_since: int | None = None
        self.down_total = 0

        self.phase: str | None = None  # None | undetected | activating | dead
        self.fail_time = 0
        self.detect_time = 0
        self.unreachable = 0
        self.current: SwitchoverReport | None = None
        self.outage_total = 0

        self.n_days = max(1, -(-self.D // DAY_US))
        self.report = SimReport(cfg.name, cfg.duration_s, self.m,
                                per_day_completed=[0] * self.n_days,
                                payment_log=None if self.saturate else [])
        self.failed = defaultdict(int)
        self.trace = self._check_trace(trace) if trace is not None else []

    # -- setup ---------------------------------------------------------------

    def _check_trace(self, trace):
        out = []
        n = self.topo.node_count
        for i, item in enumerate(trace):
            t, snd, rcv, amt = item
            if not 0 <= t < self.cfg.duration_s:
                raise InvalidTrace(f"trace entry {i} at t={t} lies outside [0, {self.cfg.duration_s})")
            if not (0 <= snd < n and 0 <= rcv < n) or snd == rcv or amt < 0:
                raise InvalidTrace(f"trace entry {i} is malformed: {item!r}")
            out.append((_us(t), int(snd), int(rcv), int(amt)))
        return out

    def _schedule(self) -> None:
        cfg = self.cfg
        self.windows = int(cfg.duration_s // cfg.rebalance_interval_s)
        if cfg.rebalance_downtime_s > 0 and self.windows:
            self.q.push(0, EventKind.REBALANCE_START, 0)
        for t, tier in cfg.failure_injections:
            self.q.push(_us(t), EventKind.FAILURE, tier)
        for i, item in enumerate(self.trace):
            self.q.push(item[0], EventKind.TRACE_PAYMENT, (i, item))
        self.q.push(self.D, EventKind.END)

    # -- availability ----------------------------------------------------------

    @property
    def up(self) -> bool:
        return self.state.available

    def _change(self, fn) -> None:
        was = self.up
        fn()
        if was and not self.up:
            self.down_since = self.now
            self._pause()
        elif not was and self.up:
            self.down_total += self.now - self.down_since
            self.down_since = None
            self._resume()

    def _pause(self) -> None:
        if self.done_at is not None:
            self.work_left = self.done_at - self.now
            self.done_at = None
            self.gen += 1

    def _resume(self) -> None:
        if not self.cfg.fast_forward and self.cur_j is not None:
            self.done_at = self.now + self.work_left
            self.q.push(self.done_at, EventKind.PAYMENT_DONE, self.gen)

    # -- saturation server -------------------------------------------------------

    def _issue(self, j: int) -> None:
        self.cur_j = j
        self.work_left = self.s
        self.report.payments_issued += 1
        if not self.cfg.fast_forward and self.up:
            self.done_at = self.now + self.s
            self.q.push(self.done_at, EventKind.PAYMENT_DONE, self.gen)

    def _pair(self, j: int) -> tuple[int, int]:
        p = j % self.m
        return self.order[p], self.order[(p + 1) % self.m]

    def _day(self, t: int) -> int:
        return min(t // DAY_US, self.n_days - 1)

    def _tally(self, status: PaymentStatus, fee: int, t: int) -> None:
        if status is PaymentStatus.SUCCESS:
            self.report.payments_completed += 1
            self.report.fees_collected_msat += fee
            self.report.per_day_completed[self._day(t)] += 1
        else:
            self.failed[status.value] += 1

    def _execute(self, j: int, t: int) -> None:
        snd, rcv = self._pair(j)
        res = execute_payment(self.state, snd, rcv, self.cfg.payment_amount_msat)
        self._tally(res.status, res.fees_paid_msat, t)

    def _advance(self, t: int) -> None:
        if t > self.now and self.saturate and self.cfg.fast_forward and self.up \
                and self.cur_j is not None:
            self._serve(self.now, t)
        self.now = t

    def _serve(self, a: int, b: int) -> None:
        avail = b - a
        if avail < self.work_left:
            self.work_left -= avail
            return
        first = a + self.work_left
        n = 1 + (avail - self.work_left) // self.s
        last = first + (n - 1) * self.s
        j0 = self.cur_j
        self._complete_batch(j0, n, first)
        self.report.payments_issued += n - 1
        log.debug("fast-forward %d payments in [%d, %d] us", n, first, last)
        if last < self.D:
            self.now = last
            self._issue(j0 + n)
            self.work_left = self.s - (b - last)
        else:
            self.cur_j = None

    def _complete_batch(self, j0: int, n: int, first: int) -> None:
        m, amt = self.m, self.cfg.payment_amount_msat
        q, r = divmod(n, m)
        start = j0 % m
        moves = []
        fees = 0
        for p in range(m):
            cnt = q + (1 if (p - start) % m < r else 0)
            if not cnt:
                continue
            snd, rcv = self.order[p], self.order[(p + 1) % m]
            hops = route(self.state, snd, rcv)
            if any(self.state.frozen(h) for h in hops):
                moves = None
                break
            if len(hops) == 1:
                moves.append((hops[0], snd, cnt * amt))
            else:
                hub = hops[0].other(snd)
                fee = fee_for_hop(hops[0].policy_of(hub), amt)
                moves.append((hops[0], snd, cnt * (amt + fee)))
                moves.append((hops[1], hub, cnt * amt))
                fees += cnt * fee
        if moves is not None:
            debit = defaultdict(int)
            for ch, payer, total in moves:
                debit[(ch.id, payer)] += total
            chans = {ch.id: ch for ch, _, _ in moves}
            if all(chans[cid].balance_of(node) >= v for (cid, node), v in debit.items()):
                for ch, payer, total in moves:
                    ch.push(payer, total)
                self.report.payments_completed += n
                self.report.fees_collected_msat += fees
                self._count_days(first, n)
                return
        for i in range(n):
            self._execute(j0 + i, first + i * self.s)

    def _count_days(self, first: int, n: int) -> None:
        s = self.s

        def before(T: int) -> int:
            if T <= first:
                return 0
            return min(n, -(-(T - first) // s))

        last = first + (n - 1) * s
        for d in range(self._day(first), self._day(last) + 1):
            lo = d * DAY_US
            hi = (d + 1) * DAY_US if d < self.n_days - 1 else self.D + 1
            self.report.per_day_completed[d] += before(hi) - before(lo)

    # -- event handlers --------------------------------------------------------

    def _on_payment_done(self, ev) -> None:
        if ev.payload != self.gen:
            return
        t = ev.time
        self.done_at = None
        j = self.cur_j
        self._execute(j, t)
        if t < self.D:
            self._issue(j + 1)
        else:
            self.cur_j = None

    def _on_rebalance_start(self, ev) -> None:
        k = ev.payload
        self._change(lambda: setattr(self.state, "downtime", True))
        self.report.rebalances_executed += 1
        self.q.push(self.now + _us(self.cfg.rebalance_downtime_s), EventKind.REBALANCE_END, k)
        if k + 1 < self.windows:
            self.q.push(_us((k + 1) * self.cfg.rebalance_interval_s), EventKind.REBALANCE_START, k + 1)
        log.debug("rebalance window %d opens at %.6f s", k, self.now / US)
        self._rebalance()

    def _rebalance(self) -> None:
        l_min = self.cfg.rebalance_l_min_msat
        if l_min is None or self.state.active_hub is None or self.phase == "dead":
            return
        hub = self.state.active_hub
        low = [c for c in self.state.channels.values()
               if hub in (c.a, c.b) and min(c.balance_a, c.balance_b) < l_min]
        if not low:
            return
        inp = hub_input_from_state(self.state, l_min, self.cfg.rebalance_budget_msat)
        try:
            plan = plan_hub_rebalance(inp, tie_break=False)
        except InfeasibleError:
            self.report.rebalance_plans_infeasible += 1
            return
        apply_plan(self.state, plan)
        self.report.rebalance_plans_applied += 1

    def _on_rebalance_end(self, ev) -> None:
        self._change(lambda: setattr(self.state, "downtime", False))

    def _on_failure(self, ev) -> None:
        hub = self.topo.hub_at_tier(ev.payload)
        if hub in self.state.failed_hubs:
            return
        t = self.now
        hb = _us(self.policy.heartbeat_interval_s)
        # a hub failing on a heartbeat tick does not send that beat
        last = ((t - 1) // hb) * hb if t > 0 else 0
        self.health[hub] = record_heartbeat(self.health[hub], last / US)
        was_active = hub == self.state.active_hub
        if was_active and self.phase == "activating":
            self._close_activation(t)
        self._change(lambda: mark_hub_failed(self.state, hub))
        if was_active:
            self.phase = "undetected"
            self.fail_time = t
        self.q.push(last + _us(self.policy.failure_timeout_s) + 1, EventKind.DETECT, hub)
        log.info("hub %d (tier %d) fails at %.6f s", hub, ev.payload, t / US)

    def _on_detect(self, ev) -> None:
        hub = ev.payload
        t = self.now
        self.health[hub] = check(self.health[hub], self.policy, t / US)
        if hub != self.state.active_hub or self.phase != "undetected":
            return
        self.unreachable = self._attempts(t)
        if self.saturate:
            self._reject(PaymentStatus.HUB_UNREACHABLE, self.unreachable)
        self.detect_time = t
        try:
            rep = trigger_switchover(self.state, self.policy, t / US)
        except NetworkDown:
            self.phase = "dead"
            self.report.network_down = True
            log.info("no dormant tier left at %.6f s: network down", t / US)
            return
        self.phase = "activating"
        self.current = rep
        self.report.switchovers.append(rep)
        self.q.push(_us(rep.active_at), EventKind.ACTIVATE, rep)
        log.info("switchover %d -> %d, active at %.6f s", rep.failed_hub, rep.activated_hub, rep.active_at)

    def _attempts(self, end: int) -> int:
        """Retries a saturating client makes in [fail_time, end), one per service slot."""
        end = min(end, self.D)
        if end <= self.fail_time:
            return 0
        return -(-(end - self.fail_time) // self.s)

    def _reject(self, status: PaymentStatus, n: int) -> None:
        self.report.payments_issued += n
        self.failed[status.value] += n

    def _close_activation(self, end: int) -> None:
        if self.saturate:
            n = self._attempts(end) - self.unreachable
            self._reject(PaymentStatus.NETWORK_DOWN, n)
            self.current.payments_rejected_during_window = n
        self.outage_total += min(end, self.D) - self.fail_time
        self.phase = None

    def _on_activate(self, ev) -> None:
        rep = ev.payload
        if rep is not self.current or self.phase != "activating":
            return
        self._close_activation(self.now)
        self._change(lambda: complete_switchover(self.state, rep))

    def _on_trace_payment(self, ev) -> None:
        i, (t, snd, rcv, amt) = ev.payload
        self.report.payments_issued += 1
        if self.state.downtime:
            status, fee = PaymentStatus.NETWORK_DOWN, 0
        elif self.state.outage:
            if self.phase == "undetected":
                status = PaymentStatus.HUB_UNREACHABLE
            else:
                status = PaymentStatus.NETWORK_DOWN
                if self.phase == "activating":
                    self.current.payments_rejected_during_window += 1
            fee = 0
        else:
            res = execute_payment(self.state, snd, rcv, amt)
            status, fee = res.status, res.fees_paid_msat
        self._tally(status, fee, t)
        self.report.payment_log.append(
            {"index": i, "t": t / US, "sender": snd, "receiver": rcv,
             "amount_msat": amt, "status": status.value, "fee_msat": fee})

    def _on_end(self, ev) -> None:
        t = self.D
        if self.phase == "undetected":
            if self.saturate:
                self._reject(PaymentStatus.HUB_UNREACHABLE, self._attempts(t))
            self.outage_total += t - self.fail_time
        elif self.phase == "activating":
            self._close_activation(t)
        elif self.phase == "dead":
            if self.saturate:
                self._reject(PaymentStatus.NETWORK_DOWN, self._attempts(t) - self.unreachable)
            self.outage_total += t - self.fail_time
        if self.down_since is not None:
            self.down_total += t - self.down_since
        if self.cur_j is not None:
            self.report.in_flight = 1

    # -- driver ------------------------------------------------------------------

    def run(self) -> SimReport:
        handlers = {
            EventKind.PAYMENT_DONE: self._on_payment_done,
            EventKind.REBALANCE_START: self._on_rebalance_start,
            EventKind.REBALANCE_END: self._on_rebalance_end,
            EventKind.FAILURE: self._on_failure,
            EventKind.DETECT: self._on_detect,
            EventKind.ACTIVATE: self._on_activate,
            EventKind.TRACE_PAYMENT: self._on_trace_payment,
            EventKind.END: self._on_end,
        }
        self._schedule()
        if self.saturate:
            self._issue(0)
        while self.q:
            ev = self.q.pop()
            if ev.kind is EventKind.PAYMENT_DONE and ev.payload != self.gen:
                continue
            self._advance(ev.time)
            handlers[ev.kind](ev)
            if ev.kind is EventKind.END:
                break
        rep = self.report
        rep.payments_failed = dict(sorted(self.failed.items()))
        rep.total_downtime_s = self.down_total / US
        rep.rebalance_downtime_s = rep.rebalances_executed * self.cfg.rebalance_downtime_s
        rep.outage_s = self.outage_total / US
        return rep


def run_simulation(config: SimConfig, state: NetworkState | None = None) -> SimReport:
    """Saturation run: payments back to back whenever the network is up."""
    return Simulation(config, state).run()


def workload_replay(config: SimConfig, trace: Iterable[tuple[float, int, int, int]],
                    state: NetworkState | None = None) -> SimReport:
    """Execute exactly ``trace`` (time, sender, receiver, amount_msat) instead of saturation traffic.

    Trace payments settle instantly at their timestamps; downtime windows
    and failure injections from ``config`` apply as in a saturation run.
    """
    return Simulation(config, state, list(trace)).run()
