"""Deterministic discrete-event loop: node radio/role state machine, scheme
dispatch and round orchestration.

One simulation owns one event heap ordered by (time, seq), its own RNG
streams and all mutable world state, so identical (config, seed) pairs give
bit-identical results. Energy is charged lazily: whenever a node is touched,
the elapsed interval is billed at its current radio mode's power.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Union

from ecsim import cluster as cluster_mod
from ecsim import report as report_mod
from ecsim.cache import CacheStore, StoreResult
from ecsim.core import EnergyAccount, EnergyModelParams, NodeId, RadioMode, consume
from ecsim.scheduler import (
    ActivityLedger,
    IdleDecision,
    InsufficientHistory,
    NoCapacityError,
    SleepInputs,
    backward_diff,
    compute_idle,
    compute_sleep,
    pairwise_idle_decision,
    path_delay,
    sp_sleep,
)
from ecsim.topology import Grid, Position, build_connectivity, move_step, refresh_node
from ecsim.traffic import Packet, PacketClass, generate, tx_delay

if TYPE_CHECKING:
    from ecsim.config import ScenarioConfig


class EventKind(Enum):
    PACKET_ARRIVAL = "packet-arrival"
    TX_COMPLETE = "tx-complete"
    SLOT_BOUNDARY = "slot-boundary"
    ROUND_SETUP = "round-setup"
    SLEEP_EXPIRY = "sleep-expiry"
    IDLE_EXPIRY = "idle-expiry"
    MOBILITY_STEP = "mobility-step"
    NODE_DEATH = "node-death"
    CACHE_DELIVERY = "cache-delivery"


@dataclass(order=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    node: NodeId | None = field(compare=False, default=None)
    payload: dict = field(compare=False, default_factory=dict)


class NodePhase(Enum):
    ACTIVE = "active"
    IDLE = "idle"
    SLEEP = "sleep"


# --------------------------------------------------------------------------
# Schemes


@dataclass(frozen=True)
class TrafficAware:
    """The traffic-aware sleep-proxy scheme; intervals come from the scheduler."""

    name = "traffic-aware"


@dataclass(frozen=True)
class AlwaysOn:
    name = "always-on"


@dataclass(frozen=True)
class PeriodicSleepWake:
    duty: float
    period: float
    name = "periodic"

    def __post_init__(self) -> None:
        if not 0.0 < self.duty <= 1.0:
            raise ValueError("duty must lie in (0, 1]")
        if self.period <= 0:
            raise ValueError("period must be > 0")


@dataclass(frozen=True)
class CoordinatedDutyCycle:
    """Synchronized listen/sleep windows shared by all cluster members."""

    listen: float
    sleep: float
    name = "coordinated"

    def __post_init__(self) -> None:
        if self.listen <= 0 or self.sleep <= 0:
            raise ValueError("listen and sleep windows must be > 0")


Scheme = Union[TrafficAware, AlwaysOn, PeriodicSleepWake, CoordinatedDutyCycle]


@dataclass(frozen=True)
class PhaseDirective:
    phase: NodePhase
    until: float | None  # next scheduled transition; None means indefinite


def dispatch_scheme(
    scheme: Scheme,
    now: float,
    offset: float = 0.0,
    assigned_sleep: float | None = None,
) -> PhaseDirective:
    """Phase directive for a node under the given scheme at time ``now``."""
    if isinstance(scheme, AlwaysOn):
        return PhaseDirective(NodePhase.ACTIVE, None)
    if isinstance(scheme, TrafficAware):
        if assigned_sleep is not None:
            return PhaseDirective(NodePhase.SLEEP, now + assigned_sleep)
        return PhaseDirective(NodePhase.ACTIVE, None)
    if isinstance(scheme, PeriodicSleepWake):
        period = scheme.period
        listen = scheme.duty * scheme.period
    else:
        period = scheme.listen + scheme.sleep
        listen = scheme.listen
    rel = now - offset
    cycle = math.floor(rel / period + 1e-9)
    within = rel - cycle * period
    if within < listen - 1e-9:
        return PhaseDirective(NodePhase.ACTIVE, offset + cycle * period + listen)
    return PhaseDirective(NodePhase.SLEEP, offset + (cycle + 1) * period)


# --------------------------------------------------------------------------
# Runtime state


class PacketWork:
    """In-flight state of one packet: current hop timing and visited nodes."""

    __slots__ = ("packet", "hop_arrived", "hops", "visited", "defer_count")

    def __init__(self, packet: Packet, created_at: float):
        self.packet = packet
        self.hop_arrived = created_at
        self.hops: list[tuple[float, float]] = []
        self.visited: list[NodeId] = [packet.src]
        self.defer_count = 0


class SimNode:
    """Mutable per-node simulation state."""

    __slots__ = (
        "nid",
        "account",
        "initial_energy",
        "alive",
        "phase",
        "phase_epoch",
        "tx_active",
        "rx_active",
        "mode",
        "mode_epoch",
        "last_touch",
        "outbox",
        "tx_busy_until",
        "radio_busy_until",
        "cache",
        "time_in_mode",
        "death_time",
        "sp_rounds",
        "ch_rounds",
        "offset",
        "wake_at",
        "last_relay_slot",
        "custody",
        "retry_heap",
    )

    def __init__(self, nid: NodeId, initial_energy: float, cache_capacity: int):
        self.nid = nid
        self.account = EnergyAccount(initial_energy, initial_energy)
        self.initial_energy = initial_energy
        self.alive = True
        self.phase = NodePhase.ACTIVE
        self.phase_epoch = 0
        self.tx_active = False
        self.rx_active = 0
        self.mode = RadioMode.IDLE
        self.mode_epoch = 0
        self.last_touch = 0.0
        self.outbox: deque[PacketWork] = deque()
        self.tx_busy_until = 0.0
        self.radio_busy_until = 0.0
        self.cache = CacheStore(nid, cache_capacity)
        self.time_in_mode = {mode: 0.0 for mode in RadioMode}
        self.death_time: float | None = None
        self.sp_rounds = 0
        self.ch_rounds = 0
        self.offset = 0.0  # phase offset for staggered periodic schedules
        self.wake_at: float | None = None  # scheduled sleep exit, while sleeping
        self.last_relay_slot = -(10**9)  # absolute slot of last forwarding work
        self.custody = 0  # deferred packets parked here awaiting a retry
        self.retry_heap: list[float] = []  # pending retry times for custody

    @property
    def awake(self) -> bool:
        return self.alive and self.phase is not NodePhase.SLEEP


# Terminal packet states.
DELIVERED = "delivered"
DELIVERED_LATE = "delivered-late"
LOST_DEADLINE = "lost-deadline"
LOST_DEAD = "lost-dead"
LOST_NO_CACHE = "lost-no-cache"


# Slots a node stays grant-ineligible after receiving forwarding work for
# others: it must stay up long enough to move the packet onward, while a
# sleeping destination's traffic is recovered by the neighbor cache.
RELAY_QUIET_SLOTS = 1


class Simulation:
    """One deterministic simulation run of a scenario under one scheme."""

    def __init__(self, config: "ScenarioConfig", seed: int, collect_trace: bool = False):
        config.validate_runtime()
        self.config = config
        self.seed = seed
        self.scheme: Scheme = config.scheme
        self.horizon = config.horizon_s
        self.round_length = config.round_s
        self.slots_per_round = config.slots_per_round
        self.slot_width = config.round_s / config.slots_per_round
        self.obs_window = config.observation_window_s or config.round_s
        self.params = config.energy
        self.link_bps = config.link_bps
        self.retry_s = config.retry_s

        master = random.Random(seed)
        placement_rng = random.Random(master.randrange(2**63))
        traffic_rng = random.Random(master.randrange(2**63))
        self.mobility_rng = random.Random(master.randrange(2**63))

        # The underlying graph model assumes initial connectivity, so
        # placements are rejection-sampled (deterministically) until the
        # topology is one component.
        self.grid, self.graph = self._place_connected(config, placement_rng)
        self.nodes = {}
        for nid in range(config.node_count):
            node = SimNode(nid, config.initial_energy_j, config.cache_capacity_bits)
            if isinstance(self.scheme, PeriodicSleepWake):
                node.offset = (nid * self.scheme.period) / max(1, config.node_count)
            self.nodes[nid] = node

        self.ledger = ActivityLedger(self.slot_width, self.slots_per_round)
        self.service_ledger = cluster_mod.ServiceLedger(tau=self.round_length)
        self.clusters: list[cluster_mod.Cluster] = []
        self.sp_history: dict[int, list[float]] = {}
        self.ch_ids: set[NodeId] = set()

        self.now = 0.0
        self.round_index = -1
        self.round_start = 0.0
        self.current_slot = 0
        self._heap: list[Event] = []
        self._seq = 0

        self.in_flight: dict[int, PacketWork] = {}
        self._topology_version = 0
        self._dist_cache: dict[NodeId, tuple[int, dict[NodeId, int]]] = {}
        self.terminal: dict[int, str] = {}
        self.holders_by_dst: dict[NodeId, set[NodeId]] = {}
        self.dp_samples: dict[NodeId, deque[tuple[float, float, int]]] = {
            nid: deque() for nid in self.nodes
        }
        self.cap_samples: dict[NodeId, deque[tuple[float, float]]] = {
            nid: deque() for nid in self.nodes
        }

        self.generated = 0
        self.generated_sleeping_dst = 0
        self.delivered_sleeping_dst = 0
        self.delivered_bits_ok = 0
        self.delay_sum = 0.0
        self.delay_count = 0
        self.counts = {
            DELIVERED: 0,
            DELIVERED_LATE: 0,
            LOST_DEADLINE: 0,
            LOST_DEAD: 0,
            LOST_NO_CACHE: 0,
        }
        self.first_death: float | None = None
        self.timeseries: list[tuple[float, float, float]] = []
        self.sleep_audit: list[dict] = []  # member sleep grants
        self.sp_sleep_audit: list[dict] = []  # SP self-sleeps
        self.trace: list[tuple[float, int, str, str]] | None = [] if collect_trace else None

        deadline_offset = config.deadline_rounds * config.round_s
        traffic_until = min(config.traffic_horizon_s or self.horizon, self.horizon)
        self.packets = (
            generate(config.flows, traffic_until, traffic_rng, deadline_offset)
            if config.flows and traffic_until > 0
            else []
        )
        self._sleeping_at_creation: dict[int, bool] = {}
        for packet in self.packets:
            self._push(packet.created_at, EventKind.PACKET_ARRIVAL, packet.src,
                       packet_id=packet.id, fresh=True)
        self._packet_by_id = {p.id: p for p in self.packets}

        self._push(0.0, EventKind.ROUND_SETUP)
        if config.p_move > 0 and config.node_count > 0:
            self._push(config.mobility_step_s, EventKind.MOBILITY_STEP)
        if not isinstance(self.scheme, (TrafficAware, AlwaysOn)):
            for nid in sorted(self.nodes):
                self._baseline_tick(self.nodes[nid])

    @staticmethod
    def _place_connected(config, rng: random.Random) -> tuple[Grid, "ConnectivityGraph"]:
        from ecsim.topology import ConnectivityGraph, connected_components

        last = None
        for _ in range(200):
            grid = Grid(config.grid_width, config.grid_height)
            for nid in range(config.node_count):
                grid.place(
                    nid,
                    Position(rng.randrange(config.grid_width), rng.randrange(config.grid_height)),
                )
            graph = build_connectivity(grid)
            last = (grid, graph)
            if config.node_count <= 1 or len(connected_components(graph)) == 1:
                return last
        return last  # give up: degenerate geometry, run as-is

    # -- event plumbing ----------------------------------------------------

    def _push(self, time: float, kind: EventKind, node: NodeId | None = None, **payload) -> None:
        heapq.heappush(self._heap, Event(time, self._seq, kind, node, payload))
        self._seq += 1

    def step(self) -> Event | None:
        """Process the earliest pending event; None when the queue is empty."""
        if not self._heap:
            return None
        event = heapq.heappop(self._heap)
        assert event.time >= self.now - 1e-9, "event causality violated"
        self.now = max(self.now, event.time)
        handler = {
            EventKind.PACKET_ARRIVAL: self._on_packet_arrival,
            EventKind.TX_COMPLETE: self._on_tx_complete,
            EventKind.SLOT_BOUNDARY: self._on_slot_boundary,
            EventKind.ROUND_SETUP: self._on_round_setup,
            EventKind.SLEEP_EXPIRY: self._on_sleep_expiry,
            EventKind.IDLE_EXPIRY: self._on_idle_expiry,
            EventKind.MOBILITY_STEP: self._on_mobility_step,
            EventKind.NODE_DEATH: self._on_node_death,
            EventKind.CACHE_DELIVERY: self._on_cache_delivery,
        }[event.kind]
        handler(event)
        return event

    def run(self) -> "report_mod.MetricsReport":
        while self._heap and self._heap[0].time <= self.horizon + 1e-9:
            self.step()
        self._finalize()
        return report_mod.finalize(self)

    def _finalize(self) -> None:
        self.now = self.horizon
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.alive:
                self._touch(node)
        self.timeseries.append(self._timeseries_row())

    def _timeseries_row(self) -> tuple[float, float, float]:
        alive = sum(1 for n in self.nodes.values() if n.alive)
        residual = sum(n.account.e_residual for n in self.nodes.values())
        return (self.now, alive / max(1, len(self.nodes)), residual)

    def _trace_event(self, node: NodeId | None, kind: str, detail: str) -> None:
        if self.trace is not None:
            self.trace.append((self.now, -1 if node is None else node, kind, detail))

    # -- energy accounting -------------------------------------------------

    def _touch(self, node: SimNode) -> None:
        """Charge the elapsed interval at the node's current mode power."""
        duration = self.now - node.last_touch
        if duration <= 0:
            node.last_touch = self.now
            return
        before = node.account.e_residual
        node.account = consume(node.account, node.mode, duration, self.params)
        node.time_in_mode[node.mode] += duration
        if node.mode in (RadioMode.ACTIVE_TX, RadioMode.ACTIVE_RX):
            self._record_activity(node.nid, node.last_touch, self.now)
        if self.trace is not None:
            spent = before - node.account.e_residual
            self.trace.append(
                (
                    self.now,
                    node.nid,
                    "mode",
                    f"mode={node.mode.value};dur={duration!r};energy={spent!r}",
                )
            )
        node.last_touch = self.now

    def _record_activity(self, nid: NodeId, start: float, end: float) -> None:
        """Distribute a radio-busy interval into the current round's slots."""
        lo = max(start, self.round_start)
        hi = min(end, self.round_start + self.round_length)
        if hi <= lo:
            return
        first = int((lo - self.round_start) / self.slot_width)
        last = int((hi - self.round_start) / self.slot_width - 1e-12)
        for idx in range(max(0, first), min(self.slots_per_round - 1, last) + 1):
            slot_lo = self.round_start + idx * self.slot_width
            slot_hi = slot_lo + self.slot_width
            overlap = min(hi, slot_hi) - max(lo, slot_lo)
            if overlap > 0:
                self.ledger.record_active(nid, idx, overlap)

    def _recompute_mode(self, node: SimNode) -> None:
        if node.phase is NodePhase.SLEEP:
            new = RadioMode.SLEEP
        elif node.tx_active:
            new = RadioMode.ACTIVE_TX
        elif node.rx_active > 0:
            new = RadioMode.ACTIVE_RX
        else:
            new = RadioMode.IDLE
        if new is not node.mode:
            node.mode = new
            node.mode_epoch += 1
            self._schedule_death(node)

    def _schedule_death(self, node: SimNode) -> None:
        power = self.params.power(node.mode)
        if not node.alive or power <= 0 or node.account.e_residual <= 0:
            return
        eta = self.now + node.account.e_residual / power
        if eta <= self.horizon + 1e-9:
            self._push(eta, EventKind.NODE_DEATH, node.nid, epoch=node.mode_epoch)

    def _set_phase(self, node: SimNode, phase: NodePhase) -> None:
        self._touch(node)
        node.phase = phase
        node.phase_epoch += 1
        if phase is not NodePhase.SLEEP:
            node.wake_at = None
        self._recompute_mode(node)

    def _set_tx(self, node: SimNode, active: bool) -> None:
        self._touch(node)
        node.tx_active = active
        self._recompute_mode(node)

    def _bump_rx(self, node: SimNode, delta: int) -> None:
        self._touch(node)
        node.rx_active = max(0, node.rx_active + delta)
        self._recompute_mode(node)

    # -- packet terminal accounting -----------------------------------------

    def _finish(self, work: PacketWork, state: str) -> None:
        pid = work.packet.id
        if pid in self.terminal:
            return
        self.terminal[pid] = state
        self.counts[state] += 1
        if state == DELIVERED and self._sleeping_at_creation.get(pid):
            self.delivered_sleeping_dst += 1
        self._trace_event(work.packet.dst, "packet-" + state, f"pid={pid}")

    # -- handlers ------------------------------------------------------------

    def _on_packet_arrival(self, event: Event) -> None:
        pid = event.payload["packet_id"]
        nid = event.node
        node = self.nodes[nid]
        if event.payload.get("retry"):
            node.custody = max(0, node.custody - 1)
            while node.retry_heap and node.retry_heap[0] <= self.now + 1e-9:
                heapq.heappop(node.retry_heap)
        if pid in self.terminal:
            return
        if event.payload.get("fresh"):
            packet = self._packet_by_id[pid]
            work = PacketWork(packet, self.now)
            self.in_flight[pid] = work
            self.generated += 1
            dst_sleeping = not self.nodes[packet.dst].awake and self.nodes[packet.dst].alive
            self._sleeping_at_creation[pid] = dst_sleeping
            if dst_sleeping:
                self.generated_sleeping_dst += 1
            if not node.alive or not self.nodes[packet.dst].alive:
                self._finish(work, LOST_DEAD)
                return
        else:
            work = self.in_flight[pid]
            if not node.alive:
                self._finish(work, LOST_DEAD)
                return
        if nid == work.packet.dst:
            self._deliver(work)
            return
        node.outbox.append(work)
        self._try_transmit(node)

    def _deliver(self, work: PacketWork) -> None:
        packet = work.packet
        dst_node = self.nodes[packet.dst]
        if (
            isinstance(self.scheme, TrafficAware)
            and dst_node.alive
            and dst_node.phase is NodePhase.IDLE
        ):
            # Incoming traffic moves the destination into the active state.
            self._set_phase(dst_node, NodePhase.ACTIVE)
        delay = self.now - packet.created_at
        on_time = (
            packet.klass is PacketClass.ELASTIC
            or packet.deadline is None
            or self.now <= packet.deadline + 1e-12
        )
        self._finish(work, DELIVERED if on_time else DELIVERED_LATE)
        self.delay_sum += delay
        self.delay_count += 1
        if on_time:
            self.delivered_bits_ok += packet.size_bits
        if work.hops:
            record = path_delay(work.hops)
            sample = (self.now, record.total, record.hop_count)
            seen = set()
            for nid in work.visited:
                if nid not in seen and nid in self.dp_samples:
                    self.dp_samples[nid].append(sample)
                    seen.add(nid)

    def _try_transmit(self, node: SimNode) -> None:
        """Store-and-forward: move each queued packet one hop closer to its
        destination via an awake neighbor, cache it next to a sleeping
        destination, or defer until a blocking neighbor's wake-up."""
        while node.outbox and node.awake and not node.tx_active:
            work = node.outbox.popleft()
            packet = work.packet
            if packet.id in self.terminal:
                continue
            if (
                packet.klass is PacketClass.DELAY_SENSITIVE
                and packet.deadline is not None
                and self.now > packet.deadline
            ):
                self._finish(work, LOST_DEADLINE)
                continue
            dst_node = self.nodes[packet.dst]
            if not dst_node.alive:
                self._finish(work, LOST_DEAD)
                continue
            if not dst_node.awake and not self.config.cache_enabled:
                # Recovery disabled: traffic to a sleeping node is dropped.
                self._finish(work, LOST_NO_CACHE)
                continue
            dist = self._hop_distances(packet.dst)
            here = dist.get(node.nid)
            if here is None:
                self._defer(node, work, self.now + self.retry_s)
                continue
            if here == 1:
                if dst_node.awake:
                    self._start_tx(node, packet.dst, work)
                    break
                if self._cache_here(node, work):
                    continue
                target = self._cache_target(node.nid, packet)
                if target is not None and self.graph.has_edge(node.nid, target):
                    self._start_tx(node, target, work)
                    break
                self._defer(node, work, self._neighbor_wake(node.nid, dist, here))
                continue
            closer = [
                v
                for v in self.graph.neighbors_of(node.nid)
                if dist.get(v, math.inf) < here and self.nodes[v].awake
            ]
            if closer:
                hop = min(closer, key=lambda v: (dist[v],) + self._relay_pref(v))
                self._start_tx(node, hop, work)
                break
            self._defer(node, work, self._neighbor_wake(node.nid, dist, here))

    def _relay_pref(self, v: NodeId) -> tuple:
        """Relay choice: the cluster head costs nothing extra (it is awake
        anyway), then healthy batteries, then already-active relays; the
        battery bucket rotates the role as a relay drains."""
        node = self.nodes[v]
        bucket = int(10 * node.account.e_residual / node.initial_energy) if node.initial_energy else 0
        abs_slot = self.round_index * self.slots_per_round + self.current_slot
        recent = abs_slot - node.last_relay_slot < RELAY_QUIET_SLOTS
        return (0 if v in self.ch_ids else 1, -bucket, 0 if recent else 1, v)

    def _hop_distances(self, dst: NodeId) -> dict[NodeId, int]:
        """Hop counts to ``dst`` over the full alive topology (cached until
        the next topology change)."""
        cached = self._dist_cache.get(dst)
        if cached is not None and cached[0] == self._topology_version:
            return cached[1]
        dist: dict[NodeId, int] = {dst: 0}
        queue = deque([dst])
        while queue:
            cur = queue.popleft()
            for nxt in sorted(self.graph.neighbors_of(cur)):
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        self._dist_cache[dst] = (self._topology_version, dist)
        return dist

    def _cache_here(self, node: SimNode, work: PacketWork) -> bool:
        """Park the packet in this node's cache for its sleeping neighbor."""
        packet = work.packet
        result = node.cache.store(packet, self.now)
        if result in (StoreResult.ACCEPTED, StoreResult.DUPLICATE):
            self.holders_by_dst.setdefault(packet.dst, set()).add(node.nid)
            self._trace_event(node.nid, "cache-store", f"pid={packet.id};dst={packet.dst}")
            return True
        return False

    def _cache_target(self, exclude: NodeId, packet: Packet) -> NodeId | None:
        """Active hop-neighbor of the sleeping destination with most free
        cache space (ties to smallest id)."""
        best: tuple[int, int] | None = None
        best_node = None
        for nid in sorted(self.graph.neighbors_of(packet.dst)):
            if nid == exclude:
                continue
            cand = self.nodes[nid]
            if not cand.awake or cand.cache.free_bits < packet.size_bits:
                continue
            key = (-cand.cache.free_bits, nid)
            if best is None or key < best:
                best = key
                best_node = nid
        return best_node

    def _neighbor_wake(self, nid: NodeId, dist: dict[NodeId, int], here: int) -> float:
        """Earliest wake among neighbors that could unblock forwarding."""
        wakes = [
            self.nodes[v].wake_at
            for v in self.graph.neighbors_of(nid)
            if dist.get(v, math.inf) <= here
            and self.nodes[v].alive
            and self.nodes[v].phase is NodePhase.SLEEP
            and self.nodes[v].wake_at is not None
        ]
        if wakes:
            return max(self.now, min(wakes))
        return self.now + self.retry_s

    def _defer(self, node: SimNode, work: PacketWork, retry_at: float) -> None:
        retry_at = max(retry_at, self.now)
        work.defer_count += 1
        if work.defer_count > 3:
            # Repeatedly unforwardable (e.g. schedules never overlapping):
            # back off so hopeless packets stop flooding the event queue.
            backoff = min(self.retry_s * 2.0 ** (work.defer_count - 3), self.round_length)
            retry_at = max(retry_at, self.now + backoff)
        node.custody += 1
        heapq.heappush(node.retry_heap, retry_at)
        self._push(retry_at, EventKind.PACKET_ARRIVAL, node.nid,
                   packet_id=work.packet.id, retry=True)

    def _start_tx(self, sender: SimNode, receiver_id: NodeId, work: PacketWork) -> None:
        receiver = self.nodes[receiver_id]
        duration = tx_delay(work.packet.size_bits, self.link_bps)
        hosting = self.now - work.hop_arrived
        work.hops.append((hosting, duration))
        if work.packet.dst != receiver_id:
            # The receiver now owes onward forwarding: it stays
            # grant-ineligible for a few slots so the path survives.
            receiver.last_relay_slot = (
                self.round_index * self.slots_per_round + self.current_slot
            )
        self._set_tx(sender, True)
        self._bump_rx(receiver, +1)
        end = self.now + duration
        sender.tx_busy_until = end
        sender.radio_busy_until = max(sender.radio_busy_until, end)
        receiver.radio_busy_until = max(receiver.radio_busy_until, end)
        self._push(end, EventKind.TX_COMPLETE, receiver_id,
                   packet_id=work.packet.id, sender=sender.nid)
        self._trace_event(
            sender.nid, "tx-start", f"pid={work.packet.id};to={receiver_id}"
        )

    def _on_tx_complete(self, event: Event) -> None:
        pid = event.payload["packet_id"]
        sender = self.nodes[event.payload["sender"]]
        receiver = self.nodes[event.node]
        if sender.alive:
            self._set_tx(sender, False)
        if receiver.alive:
            self._bump_rx(receiver, -1)
        work = self.in_flight[pid]
        if pid not in self.terminal:
            if not sender.alive or not receiver.alive:
                self._finish(work, LOST_DEAD)
            else:
                work.hop_arrived = self.now
                work.visited.append(receiver.nid)
                if receiver.nid == work.packet.dst:
                    self._deliver(work)
                else:
                    receiver.outbox.append(work)
        if sender.alive:
            self._try_transmit(sender)
        if receiver.alive and pid not in self.terminal:
            self._try_transmit(receiver)

    def _on_slot_boundary(self, event: Event) -> None:
        slot = event.payload["slot"]
        # Flush ongoing radio activity so the closing slot is fully recorded.
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.alive and (node.tx_active or node.rx_active):
                self._touch(node)
        for nid in sorted(self.nodes):
            if self.nodes[nid].alive:
                self.ledger.record_active(nid, slot, 0.0)
        self._evict_caches()
        if isinstance(self.scheme, TrafficAware) and self.round_index >= 1:
            self._sp_evaluation(slot)
        self.current_slot = slot + 1

    def _evict_caches(self) -> None:
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if not node.alive:
                continue
            for packet in node.cache.evict_expired(self.now):
                work = self.in_flight.get(packet.id)
                if work is not None:
                    self._finish(work, LOST_DEADLINE)
                holders = self.holders_by_dst.get(packet.dst)
                if holders and node.cache.volume_for(packet.dst) == 0:
                    holders.discard(nid)

    def _imminent_bits(self, m: NodeId) -> int:
        """Traffic about to reach ``m``: bits cached for it or queued at its
        neighbors. Packets further away are the cache mechanism's job."""
        total = 0
        for nb in sorted(self.graph.neighbors_of(m)):
            neighbor = self.nodes[nb]
            if not neighbor.alive:
                continue
            total += neighbor.cache.volume_for(m)
            for work in neighbor.outbox:
                if work.packet.dst == m and work.packet.id not in self.terminal:
                    total += work.packet.size_bits
        return total

    def _sp_evaluation(self, closed_slot: int) -> None:
        """Per-slot proxy duties: pairwise idling, sleep grants, SP self-sleep."""
        for idx, cluster in enumerate(self.clusters):
            sp_node = self.nodes.get(cluster.sp)
            if sp_node is None or not sp_node.awake:
                continue
            members = [m for m in sorted(cluster.members) if self.nodes[m].alive]
            member_set = set(members)
            for m in members:
                node = self.nodes[m]
                if m in (cluster.ch, cluster.sp) or node.phase is not NodePhase.ACTIVE:
                    continue
                incoming = self._imminent_bits(m)
                if incoming > 0:
                    continue
                for other in sorted(self.graph.neighbors_of(m)):
                    if other not in member_set or not self.nodes[other].awake:
                        continue
                    decision = pairwise_idle_decision(
                        self.ledger, m, other, incoming, self.graph
                    )
                    if decision is IdleDecision.GO_IDLE:
                        self._enter_idle(node)
                        self._trace_event(m, "inform-sp", f"sp={cluster.sp}")
                        break
            for m in members:
                # Idle assignment: an active member with no activity in the
                # closed slot and nothing inbound returns to idle listening.
                node = self.nodes[m]
                if m == cluster.sp or node.phase is not NodePhase.ACTIVE:
                    continue
                if node.tx_active or node.rx_active or node.outbox:
                    continue
                if self.ledger.slot_value(m, closed_slot) == 0.0 and self._imminent_bits(m) == 0:
                    self._enter_idle(node)
            for m in members:
                node = self.nodes[m]
                if m == cluster.sp or node.phase is not NodePhase.IDLE:
                    continue
                if node.tx_active or node.rx_active or node.outbox:
                    continue
                if not self._sleep_eligible(m, closed_slot):
                    continue
                if self._imminent_bits(m) > 0:
                    continue
                interval = self._grant_sleep(m)
                if m == cluster.ch:
                    # The head naps only between its boundary duties.
                    interval = min(interval, self.slot_width)
                if interval > 1e-9 and self._enter_sleep(node, interval):
                    self.sleep_audit.append(
                        {
                            "node": m,
                            "time": self.now,
                            "t_sleep": interval,
                            "round_length": self.round_length,
                            "min_cache_delay": self._min_cache_delay(m),
                        }
                    )
                    self.sp_history.setdefault(idx, []).append(interval)
            self._sp_self_sleep(idx, cluster, closed_slot == self.slots_per_round - 1)

    def _sp_self_sleep(self, idx: int, cluster: cluster_mod.Cluster, last_duty: bool) -> None:
        """The proxy sleeps on its own running-mean interval: between duties it
        naps at most one boundary gap; after its last duty of the round it
        takes the full interval."""
        sp_node = self.nodes.get(cluster.sp)
        if sp_node is None or not sp_node.awake:
            return
        history = self.sp_history.get(idx, [])
        interval = sp_sleep(history, self.slots_per_round, self.round_length)
        if interval <= 1e-9:
            return
        if sp_node.tx_active or sp_node.rx_active or sp_node.outbox:
            return
        if self._imminent_bits(cluster.sp) > 0:
            return
        realized = interval if last_duty else min(interval, self.slot_width)
        if not last_duty and realized < self.slot_width - 1e-9:
            return  # nap would not fill the gap to the next duty
        if sp_node.phase is NodePhase.ACTIVE:
            self._enter_idle(sp_node)
        if self._enter_sleep(sp_node, realized):
            self.sp_sleep_audit.append(
                {"node": cluster.sp, "time": self.now, "t_sleep": interval}
            )

    def _sleep_eligible(self, nid: NodeId, closed_slot: int) -> bool:
        node = self.nodes[nid]
        closed_abs = self.round_index * self.slots_per_round + closed_slot
        if closed_abs - node.last_relay_slot < RELAY_QUIET_SLOTS:
            return False  # recently carried traffic for others
        latest = self.ledger.slot_value(nid, closed_slot)
        if latest is None:
            return False
        if latest == 0.0:
            # No traffic activity at all in the latest slot: sleep is enforced.
            return True
        try:
            return backward_diff(self.ledger, nid, closed_slot) < 0.0
        except InsufficientHistory:
            return False

    def _window_prune(self, samples: deque) -> None:
        cutoff = self.now - self.obs_window
        while samples and samples[0][0] < cutoff:
            samples.popleft()

    def _max_dp(self, nid: NodeId) -> tuple[float, int] | None:
        samples = self.dp_samples[nid]
        self._window_prune(samples)
        if not samples:
            return None
        best = max(samples, key=lambda s: (s[1], s[0]))
        return best[1], best[2]

    def _grant_sleep(self, nid: NodeId) -> float:
        """Sleep interval for one member, from current capacities, cached
        backlog and the recent path-delay window."""
        neighbors = sorted(self.graph.neighbors_of(nid))
        capacities = tuple(float(self.link_bps) for _ in neighbors)
        cap_sum = sum(capacities)
        samples = self.cap_samples[nid]
        samples.append((self.now, cap_sum))
        self._window_prune(samples)
        sup = max(v for _, v in samples)
        if sup <= 0:
            return 0.0  # isolated node: stays awake
        volumes = []
        delays = []
        for holder_id in sorted(self.holders_by_dst.get(nid, ())):
            holder = self.nodes[holder_id]
            if not holder.alive:
                continue
            vol = holder.cache.volume_for(nid)
            if vol > 0:
                volumes.append(float(vol))
                age = holder.cache.hosting_delay(nid, self.now)
                if age is not None:
                    delays.append(age)
        # The delay budget is a round fraction: it bounds how long a chunk of
        # sleep may defer traffic. Cached backlog, capacity dips and hosting
        # delays shorten it; measured path delays feed the idle window and
        # the hop exponent.
        dp = self._max_dp(nid)
        hops = dp[1] if dp is not None else 1
        inputs = SleepInputs(
            capacities=capacities,
            volumes=tuple(volumes),
            sup_capacity=sup,
            n_hops=hops,
            path_delay=self.config.sleep_budget_rounds * self.round_length,
            round_length=self.round_length,
            cache_delays=tuple(delays),
        )
        try:
            return compute_sleep(inputs, self.config.sleep_epsilon)
        except NoCapacityError:
            return 0.0

    def _min_cache_delay(self, nid: NodeId) -> float | None:
        delays = []
        for holder_id in sorted(self.holders_by_dst.get(nid, ())):
            holder = self.nodes[holder_id]
            if holder.alive:
                age = holder.cache.hosting_delay(nid, self.now)
                if age is not None:
                    delays.append(age)
        return min(delays) if delays else None

    def _idle_interval(self, nid: NodeId) -> float:
        dp = self._max_dp(nid)
        if dp is None:
            # Cold-start default: no recorded path delay.
            return compute_idle(self.round_length, 0.0, 1)
        return compute_idle(self.round_length, min(dp[0], self.round_length), dp[1])

    def _enter_idle(self, node: SimNode) -> None:
        self._set_phase(node, NodePhase.IDLE)
        interval = self._idle_interval(node.nid)
        self._push(self.now + interval, EventKind.IDLE_EXPIRY, node.nid,
                   epoch=node.phase_epoch)

    def _enter_sleep(self, node: SimNode, interval: float) -> bool:
        """Put the node to sleep for at most ``interval`` seconds, with the
        wake-up aligned just before a slot boundary.

        Alignment clusters wake-ups so forwarding progresses in bursts at
        boundaries; the realized interval never exceeds the assigned one.
        Returns False when less than one slot would remain.
        """
        wake_raw = self.now + interval
        aligned = math.floor(wake_raw / self.slot_width + 1e-9) * self.slot_width - 1e-6
        if node.retry_heap:
            # Custody: sleep only until just before the earliest retry, so the
            # handover happens the moment both ends are awake.
            aligned = min(aligned, node.retry_heap[0] - 1e-6)
        if aligned <= self.now + 1e-9:
            return False
        self._set_phase(node, NodePhase.SLEEP)
        node.wake_at = aligned
        self._push(node.wake_at, EventKind.SLEEP_EXPIRY, node.nid,
                   epoch=node.phase_epoch)
        self._trace_event(node.nid, "sleep-grant",
                          f"assigned={interval!r};realized={aligned - self.now!r}")
        return True

    def _wake_to_idle(self, node: SimNode) -> None:
        """Sleep ends (expiry or location change): node re-enters idle."""
        self._enter_idle(node)
        self._cache_pickups(node.nid)
        self._try_transmit(node)

    def _cache_pickups(self, woken: NodeId) -> None:
        """Schedule handovers of cached packets after a wake-up.

        When the counterpart is asleep, the delivery is scheduled at its known
        wake time so entries cannot starve on missed coincidences. Entries
        whose holder drifted away from the destination re-enter the normal
        forwarding pipeline instead.
        """
        for holder_id in sorted(self.holders_by_dst.get(woken, ())):
            holder = self.nodes[holder_id]
            if not holder.alive:
                continue
            if holder.awake:
                self._push(self.now, EventKind.CACHE_DELIVERY, holder_id, woken=woken)
            elif holder.wake_at is not None:
                self._push(max(self.now, holder.wake_at), EventKind.CACHE_DELIVERY,
                           holder_id, woken=woken)
        node = self.nodes[woken]
        for dst in node.cache.destinations():
            other = self.nodes.get(dst)
            if other is None or not other.alive:
                continue
            if other.awake or not self.graph.has_edge(woken, dst):
                self._push(self.now, EventKind.CACHE_DELIVERY, woken, woken=dst)
            elif other.wake_at is not None:
                self._push(max(self.now, other.wake_at), EventKind.CACHE_DELIVERY,
                           woken, woken=dst)

    def _on_sleep_expiry(self, event: Event) -> None:
        node = self.nodes[event.node]
        if not node.alive or node.phase is not NodePhase.SLEEP:
            return
        if event.payload["epoch"] != node.phase_epoch:
            return
        if isinstance(self.scheme, TrafficAware):
            self._wake_to_idle(node)
        else:
            self._baseline_tick(node)
            self._cache_pickups(node.nid)
            self._try_transmit(node)

    def _on_idle_expiry(self, event: Event) -> None:
        node = self.nodes[event.node]
        if not node.alive:
            return
        if isinstance(self.scheme, TrafficAware):
            if node.phase is NodePhase.IDLE and event.payload["epoch"] == node.phase_epoch:
                self._set_phase(node, NodePhase.ACTIVE)
        else:
            if event.payload["epoch"] == node.phase_epoch:
                self._baseline_tick(node)

    def _baseline_tick(self, node: SimNode) -> None:
        """Apply the scheme's current window to a node under a duty-cycle
        baseline scheme."""
        directive = dispatch_scheme(self.scheme, self.now, node.offset)
        if directive.phase is NodePhase.ACTIVE:
            if node.phase is not NodePhase.ACTIVE:
                self._set_phase(node, NodePhase.ACTIVE)
            if directive.until is not None:
                self._push(directive.until, EventKind.IDLE_EXPIRY, node.nid,
                           epoch=node.phase_epoch)
        else:
            if node.tx_active or node.rx_active:
                # Let the transfer finish; re-check at the radio's free time.
                self._push(max(self.now, node.radio_busy_until) + 1e-9,
                           EventKind.IDLE_EXPIRY, node.nid, epoch=node.phase_epoch)
                return
            self._set_phase(node, NodePhase.SLEEP)
            if directive.until is not None:
                node.wake_at = directive.until
                self._push(directive.until, EventKind.SLEEP_EXPIRY, node.nid,
                           epoch=node.phase_epoch)

    def _on_mobility_step(self, event: Event) -> None:
        p_step = min(1.0, self.config.p_move * self.config.mobility_step_s)
        moved: list[NodeId] = []
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if not node.alive:
                continue
            old = self.grid.position_of(nid)
            new = move_step(self.grid, nid, self.mobility_rng, p_step)
            if new != old:
                refresh_node(self.graph, self.grid, nid)
                moved.append(nid)
                self._topology_version += 1
        if isinstance(self.scheme, TrafficAware):
            for nid in moved:
                node = self.nodes[nid]
                self._trace_event(nid, "moved", "")
                if node.phase is NodePhase.SLEEP:
                    self._wake_to_idle(node)  # location change wakes the node
        self._push(self.now + self.config.mobility_step_s, EventKind.MOBILITY_STEP)

    def _on_round_setup(self, event: Event) -> None:
        # Flush ongoing activity into the closing round before the ledger reset.
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.alive:
                self._touch(node)
        self.round_index += 1
        self.round_start = self.now
        self.current_slot = 0
        self.ledger.start_round()
        self.sp_history = {}
        self.timeseries.append(self._timeseries_row())
        if isinstance(self.scheme, TrafficAware):
            self._form_round_clusters()
            self._assign_round_idle()
        for j in range(1, self.slots_per_round + 1):
            self._push(self.round_start + j * self.slot_width, EventKind.SLOT_BOUNDARY,
                       slot=j - 1)
        self._push(self.round_start + self.round_length, EventKind.ROUND_SETUP)

    def _form_round_clusters(self) -> None:
        alive = [nid for nid in sorted(self.nodes) if self.nodes[nid].alive]
        if not alive:
            self.clusters = []
            return
        energies = {nid: self.nodes[nid].account for nid in alive}
        groups = None
        if self.config.cluster_policy == "grid":
            k = self.config.cluster_partition
            block_w = math.ceil(self.config.grid_width / k)
            block_h = math.ceil(self.config.grid_height / k)
            blocks: dict[tuple[int, int], set[NodeId]] = {}
            for nid in alive:
                pos = self.grid.position_of(nid)
                blocks.setdefault((pos.x // block_w, pos.y // block_h), set()).add(nid)
            groups = [blocks[key] for key in sorted(blocks)]
        self.clusters = cluster_mod.form_clusters(
            self.graph, energies, self.service_ledger, self.round_index,
            self.round_length, groups=groups,
        )
        self.ch_ids = {cl.ch for cl in self.clusters}
        for cl in self.clusters:
            self.nodes[cl.ch].ch_rounds += 1
            self.nodes[cl.sp].sp_rounds += 1
            for role_node in {cl.ch, cl.sp}:
                node = self.nodes[role_node]
                if node.phase is NodePhase.SLEEP:
                    self._wake_to_idle(node)  # control-plane wake at set-up

    def _assign_round_idle(self) -> None:
        """Set-up phase idle assignment: every awake member re-enters idle
        listening for its computed idle interval."""
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.alive and node.phase is NodePhase.ACTIVE:
                self._enter_idle(node)

    def _on_node_death(self, event: Event) -> None:
        node = self.nodes[event.node]
        if not node.alive or event.payload["epoch"] != node.mode_epoch:
            return
        self._touch(node)
        if node.account.e_residual > 1e-9:
            return  # stale prediction
        self._kill(node)

    def _kill(self, node: SimNode) -> None:
        node.alive = False
        node.death_time = self.now
        node.account = replace(node.account, e_residual=0.0)
        node.mode_epoch += 1
        node.phase_epoch += 1
        if self.first_death is None:
            self.first_death = self.now
        self._trace_event(node.nid, "death", "")
        while node.outbox:
            self._finish(node.outbox.popleft(), LOST_DEAD)
        for dst in list(node.cache.destinations()):
            for entry in node.cache.deliver_on_wake(dst, self.now):
                work = self.in_flight.get(entry.packet.id)
                if work is not None:
                    self._finish(work, LOST_DEAD)
            holders = self.holders_by_dst.get(dst)
            if holders:
                holders.discard(node.nid)
        # Cached copies elsewhere destined for the dead node can never deliver.
        for holder_id in sorted(self.holders_by_dst.pop(node.nid, set())):
            holder = self.nodes[holder_id]
            for entry in holder.cache.deliver_on_wake(node.nid, self.now):
                work = self.in_flight.get(entry.packet.id)
                if work is not None:
                    self._finish(work, LOST_DEAD)
        self.grid.remove(node.nid)
        self.graph.remove_node(node.nid)
        self._topology_version += 1
        if isinstance(self.scheme, TrafficAware):
            self._replace_dead_roles(node.nid)

    def _replace_dead_roles(self, dead: NodeId) -> None:
        refreshed = []
        for cl in self.clusters:
            if dead not in cl.members:
                refreshed.append(cl)
                continue
            members = {m for m in cl.members if self.nodes[m].alive}
            if not members:
                continue
            if dead in (cl.ch, cl.sp):
                energies = {m: self.nodes[m].account for m in members}
                new_cl = cluster_mod.elect_roles(
                    members, energies, self.service_ledger, cl.round_index, cl.round_length
                )
                self.nodes[new_cl.ch].ch_rounds += 1
                self.nodes[new_cl.sp].sp_rounds += 1
                for role_node in {new_cl.ch, new_cl.sp}:
                    if self.nodes[role_node].phase is NodePhase.SLEEP:
                        self._wake_to_idle(self.nodes[role_node])
                refreshed.append(new_cl)
            else:
                refreshed.append(
                    cluster_mod.Cluster(
                        members=frozenset(members), ch=cl.ch, sp=cl.sp,
                        round_index=cl.round_index, round_length=cl.round_length,
                    )
                )
        self.clusters = refreshed
        self.ch_ids = {cl.ch for cl in self.clusters}

    def _on_cache_delivery(self, event: Event) -> None:
        holder = self.nodes[event.node]
        woken = event.payload["woken"]
        if not holder.alive:
            return
        if not holder.awake:
            if holder.wake_at is not None and holder.cache.volume_for(woken) > 0:
                self._push(max(self.now, holder.wake_at), EventKind.CACHE_DELIVERY,
                           holder.nid, woken=woken)
            return
        entries = holder.cache.deliver_on_wake(woken, self.now)
        if not entries:
            return
        holders = self.holders_by_dst.get(woken)
        if holders:
            holders.discard(holder.nid)
        for entry in entries:
            work = self.in_flight.get(entry.packet.id)
            if work is None or entry.packet.id in self.terminal:
                continue
            holder.outbox.append(work)
        self._try_transmit(holder)


def run_simulation(
    config: "ScenarioConfig", seed: int, collect_trace: bool = False
) -> tuple["report_mod.MetricsReport", list | None]:
    """Run one scenario; returns (report, trace rows or None)."""
    sim = Simulation(config, seed, collect_trace=collect_trace)
    report = sim.run()
    return report, sim.trace
