"""Collaborative scheduling across a network of overlapping devices.

Devices whose sensing disks pairwise intersect form clusters (maximal
cliques), each with a round-robin slot that rotates every period. When a
device detects an event it broadcasts a short ping carrying a hash of the
event's quantized features; receivers within the sender's comm radius use
matching hashes to estimate how many neighbors saw the same event. Each
device fine-tunes its own Q-table against a local reward that subtracts an
overlap penalty for duplicated detections, waived in periods where the
device holds a cluster slot. The global network reward, with the battery
spread term, is computed as an evaluation metric only.

The per-device state space extends the hour with a binned count of the
device's own detections in the previous period.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .detect import DetectorModel
from .errors import ScheduleError
from .power import LogEntry, PowerProfile
from .qsched import ActionSpace, Hyperparameters, QTable, q_update, select_action
from .rng import substream
from .sim import TimelineEngine, _day_rng_provider, make_probe_fn
from .trace import SECONDS_PER_DAY, SECONDS_PER_HOUR, EventTrace

__all__ = [
    "DeviceNode",
    "Cluster",
    "Ping",
    "NetworkRewardInputs",
    "NetworkConfig",
    "EpisodeMetrics",
    "DeviceSummary",
    "NetworkReport",
    "event_hash",
    "form_clusters",
    "slot_holder",
    "deliver_pings",
    "local_reward",
    "network_reward",
    "expand_global_table",
    "run_network",
]


@dataclass
class DeviceNode:
    """A sensor with a sensing footprint and a radio footprint, in meters."""

    id: int
    position: tuple[float, float]
    sensing_radius: float
    comm_radius: float
    battery_level: float | None = None
    qtable: QTable | None = None

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("device id must be >= 0")
        if len(self.position) != 2:
            raise ValueError("position must be a 2D point")
        self.position = (float(self.position[0]), float(self.position[1]))
        if self.sensing_radius <= 0 or self.comm_radius <= 0:
            raise ValueError("radii must be positive")
        if self.battery_level is not None and self.battery_level < 0:
            raise ValueError("battery_level must be >= 0")


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    order: tuple[int, ...]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("a cluster needs at least two members")
        if sorted(self.order) != sorted(self.members):
            raise ValueError("order must be a permutation of members")

    def slot_holder(self, t: int) -> int:
        return self.order[t % len(self.order)]


def slot_holder(cluster: Cluster, t: int) -> int:
    return cluster.slot_holder(t)


@dataclass(frozen=True)
class Ping:
    sender: int
    event_hash: int
    period: int


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def event_hash(band: float | None, start: float) -> int:
    """64-bit FNV-1a over the event's quantized features.

    Band is bucketed to 100 Hz (untagged events share a sentinel bucket),
    start to whole seconds, so co-detections of one event hash alike on
    every device.
    """
    qband = -1 if band is None else int(band // 100.0)
    qstart = int(start // 1.0)
    h = _FNV_OFFSET
    for word in (qband & _MASK64, qstart & _MASK64):
        for byte in word.to_bytes(8, "little"):
            h ^= byte
            h = (h * _FNV_PRIME) & _MASK64
    return h


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.dist(a, b)


def form_clusters(nodes: list[DeviceNode]) -> list[Cluster]:
    """Maximal cliques of the sensing-overlap graph, two members or more.

    Disks overlap iff center distance <= the radius sum. A device can sit
    in several clusters. Round-robin order starts as ascending id.
    """
    if not nodes:
        raise ValueError("need at least one node")
    ids = sorted(n.id for n in nodes)
    if len(set(ids)) != len(ids):
        raise ValueError("device ids must be unique")
    by_id = {n.id: n for n in nodes}
    adj: dict[int, set[int]] = {i: set() for i in ids}
    for i_pos, i in enumerate(ids):
        for j in ids[i_pos + 1 :]:
            a, b = by_id[i], by_id[j]
            if _dist(a.position, b.position) <= a.sensing_radius + b.sensing_radius:
                adj[i].add(j)
                adj[j].add(i)

    cliques: list[tuple[int, ...]] = []

    def expand(r: set[int], p: set[int], x: set[int]) -> None:
        if not p and not x:
            if len(r) >= 2:
                cliques.append(tuple(sorted(r)))
            return
        pivot = max(sorted(p | x), key=lambda u: len(p & adj[u]))
        for v in sorted(p - adj[pivot]):
            expand(r | {v}, p & adj[v], x & adj[v])
            p.discard(v)
            x.add(v)

    expand(set(), set(ids), set())
    cliques.sort()
    return [Cluster(members=c, order=c) for c in cliques]


@dataclass(frozen=True)
class NetworkRewardInputs:
    n_pos: int
    n_neg: int
    overlaps: tuple[int, ...]
    battery_sd: float
    w1: float
    w2: float
    w3: float

    def __post_init__(self):
        if self.n_pos < 0 or self.n_neg < 0:
            raise ValueError("activation counts must be >= 0")
        if any(o < 1 for o in self.overlaps):
            raise ValueError("every overlap count must be >= 1")
        if self.battery_sd < 0:
            raise ValueError("battery_sd must be >= 0")


def network_reward(inputs: NetworkRewardInputs) -> float:
    overlap_penalty = sum(o - 1 for o in inputs.overlaps)
    return (
        inputs.n_pos
        - inputs.w1 * inputs.n_neg
        - inputs.w2 * overlap_penalty
        - inputs.w3 * inputs.battery_sd
    )


def deliver_pings(
    nodes: list[DeviceNode],
    detections: dict[int, list[int]],
    *,
    drop_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> dict[int, dict[int, tuple[int, ...]]]:
    """Broadcast one ping per detection; collect them per receiver.

    detections maps sender id to the event hashes it pinged this period.
    Returns mailbox[receiver][hash] = senders whose ping arrived. Delivery
    reaches every other device within the sender's comm radius; with a
    positive drop_rate each delivery is lost independently with that
    probability (draw order: sender id, detection order, receiver id).
    """
    if drop_rate and rng is None:
        raise ValueError("drop_rate > 0 needs an rng")
    by_id = {n.id: n for n in nodes}
    ids = sorted(by_id)
    mailbox: dict[int, dict[int, list[int]]] = {i: {} for i in ids}
    for sender_id in sorted(detections):
        sender = by_id[sender_id]
        for h in detections[sender_id]:
            for receiver_id in ids:
                if receiver_id == sender_id:
                    continue
                if _dist(sender.position, by_id[receiver_id].position) > sender.comm_radius:
                    continue
                if drop_rate > 0 and rng.random() < drop_rate:
                    continue
                mailbox[receiver_id].setdefault(h, []).append(sender_id)
    return {
        i: {h: tuple(senders) for h, senders in row.items()}
        for i, row in mailbox.items()
    }


def local_reward(
    device_id: int,
    t: int,
    n_pos: int,
    n_neg: int,
    own_hashes: list[int],
    mailbox_row: dict[int, tuple[int, ...]],
    clusters: list[Cluster],
    w1: float,
    w2: float,
) -> float:
    """Per-device reward: Eq.-2 style terms minus the overlap penalty.

    Each own detection adds (estimate - 1) to the penalty, where the
    estimate is 1 plus matching received pings. The penalty is waived for a
    detection when the device holds the slot, this period, in a cluster one
    of the matching senders belongs to.
    """
    holding = [
        c for c in clusters if device_id in c.members and c.slot_holder(t) == device_id
    ]
    penalty = 0.0
    for h in own_hashes:
        senders = mailbox_row.get(h, ())
        if not senders:
            continue
        if any(set(senders) & set(c.members) for c in holding):
            continue
        penalty += len(senders)
    return n_pos - w1 * n_neg - w2 * penalty


def expand_global_table(table: QTable, n_bins: int) -> QTable:
    """Tile a 24-state table across detection bins for network use.

    Row (hour, bin) starts as the single-device row for that hour, so a
    pretrained schedule seeds every bin with the same action preferences.
    """
    if table.n_states != 24:
        raise ValueError(f"expected a 24-state table, got {table.n_states}")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    return QTable(
        values=np.repeat(table.values, n_bins, axis=0).astype(np.float32),
        visits=np.repeat(table.visits, n_bins, axis=0).astype(np.uint32),
        period_length=table.period_length,
    )


def _bin_index(count: int, edges: tuple[int, ...]) -> int:
    for i, edge in enumerate(edges):
        if count <= edge:
            return i
    return len(edges)


@dataclass(frozen=True)
class NetworkConfig:
    """Knobs for a network run.

    train False runs every device on fixed_interval with no learning, no
    pings, and no scheduler billing (a pure baseline). detection_bins are
    inclusive upper edges of the previous-period detection-count bins; the
    empty tuple collapses the state back to hour only.
    """

    episodes: int = 30
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    actions: ActionSpace = field(default_factory=ActionSpace)
    w2: float = 0.5
    w3: float = 0.01
    drop_rate: float = 0.0
    detection_bins: tuple[int, ...] = (0, 2, 5)
    train: bool = True
    fixed_interval: float | None = None
    eps_reset_on_change: bool = True
    failures: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.w2 < 0 or self.w3 < 0:
            raise ValueError("w2 and w3 must be >= 0")
        if not 0 <= self.drop_rate <= 1:
            raise ValueError("drop_rate must lie in [0, 1]")
        edges = tuple(int(e) for e in self.detection_bins)
        if any(e < 0 for e in edges) or list(edges) != sorted(set(edges)):
            raise ValueError("detection_bins must be strictly increasing and >= 0")
        object.__setattr__(self, "detection_bins", edges)
        if not self.train and self.fixed_interval is None:
            raise ValueError("train False needs fixed_interval")
        for entry in self.failures:
            if len(entry) != 2 or entry[1] < 0:
                raise ValueError("failures entries are (device_id, episode >= 0)")

    @property
    def n_bins(self) -> int:
        return len(self.detection_bins) + 1


@dataclass
class EpisodeMetrics:
    index: int
    events_total: int
    events_detected: int
    detection_rate: float
    mean_duplicates: float
    positives: int
    negatives: int
    global_reward: float
    battery_sd: float
    activations: dict[int, int]
    batteries: dict[int, float]


@dataclass
class DeviceSummary:
    id: int
    activations: int
    positives: int
    negatives: int
    events_detected: int
    charge_mah: float
    battery_level: float
    removed_at: int | None


@dataclass
class NetworkReport:
    n_devices: int
    episodes: list[EpisodeMetrics]
    devices: list[DeviceSummary]
    clusters: list[Cluster]
    tables: dict[int, QTable]
    logs: dict[int, list[LogEntry]] | None = None

    @property
    def detection_rate(self) -> float:
        total = sum(e.events_total for e in self.episodes)
        hit = sum(e.events_detected for e in self.episodes)
        return 1.0 if total == 0 else hit / total

    def to_dict(self) -> dict:
        return {
            "n_devices": self.n_devices,
            "detection_rate": self.detection_rate,
            "episodes": [
                {
                    "index": e.index,
                    "events_total": e.events_total,
                    "events_detected": e.events_detected,
                    "detection_rate": e.detection_rate,
                    "mean_duplicates": e.mean_duplicates,
                    "positives": e.positives,
                    "negatives": e.negatives,
                    "global_reward": e.global_reward,
                    "battery_sd": e.battery_sd,
                    "devices": [
                        {
                            "id": i,
                            "activations": e.activations[i],
                            "battery_level": e.batteries[i],
                        }
                        for i in sorted(e.activations)
                    ],
                }
                for e in self.episodes
            ],
            "devices": [
                {
                    "id": d.id,
                    "activations": d.activations,
                    "positives": d.positives,
                    "negatives": d.negatives,
                    "events_detected": d.events_detected,
                    "charge_mah": d.charge_mah,
                    "battery_level": d.battery_level,
                    "removed_at": d.removed_at,
                }
                for d in self.devices
            ],
            "clusters": [list(c.members) for c in self.clusters],
        }


class _DeviceRuntime:
    def __init__(self, node, sub_trace, span, profile, probe_fn, seed, table, collect_log):
        self.node = node
        self.rng_for_day = _day_rng_provider(seed, node.id)
        self.engine = TimelineEngine(
            sub_trace, 0.0, span, profile, probe_fn, self.rng_for_day, collect_log=collect_log
        )
        self.table = table
        self.battery_initial = (
            node.battery_level if node.battery_level is not None else profile.battery_mah
        )
        self.active = True
        self.removed_at: int | None = None
        self.prev_bin = 0
        self.last_state = 0
        self.last_action = 0
        self.activations = 0
        self.positives = 0
        self.negatives = 0
        self.detected_ids: set[int] = set()

    @property
    def battery(self) -> float:
        return self.battery_initial - self.engine.charge_mah


def run_network(
    nodes: list[DeviceNode],
    trace: EventTrace,
    config: NetworkConfig,
    detector: DetectorModel,
    profile: PowerProfile,
    seed: int,
    *,
    init_tables: dict[int, QTable] | None = None,
    collect_logs: bool = False,
) -> NetworkReport:
    """Simulate the network in lockstep periods over whole-day episodes.

    Every event needs a location; each device senses only events within its
    sensing radius. Per period and in id order: choose actions, run each
    device's timeline, exchange pings, then update each table against its
    local reward. Failures listed in the config remove a device at the
    start of the given episode; clusters re-form and, by default, epsilon
    resets for the survivors.
    """
    if not nodes:
        raise ScheduleError("need at least one device")
    order = sorted(nodes, key=lambda n: n.id)
    ids = [n.id for n in order]
    if len(set(ids)) != len(ids):
        raise ScheduleError("device ids must be unique")
    for ev in trace.events:
        if ev.location is None:
            raise ScheduleError(f"event {ev.id} has no location; network runs need one")
    span = config.episodes * SECONDS_PER_DAY
    if trace.horizon < span:
        raise ScheduleError(
            f"trace horizon {trace.horizon} s shorter than {span} s of episodes"
        )
    hp = config.hp
    actions = config.actions
    if config.train:
        if min(actions.intervals) <= profile.d_probe:
            raise ScheduleError("action space contains intervals shorter than a probe")
    else:
        if config.fixed_interval <= profile.d_probe:
            raise ScheduleError("fixed_interval not longer than the probe")
    known = set(ids)
    for did, _ep in config.failures:
        if did not in known:
            raise ScheduleError(f"failure names unknown device {did}")
    n_bins = config.n_bins
    n_states = 24 * n_bins
    probe_fn = make_probe_fn(detector)
    feat = {ev.id: (ev.band, ev.start) for ev in trace.events}
    start_day = {ev.id: int(ev.start // SECONDS_PER_DAY) for ev in trace.events}

    runtimes: dict[int, _DeviceRuntime] = {}
    for node in order:
        subset = tuple(
            ev
            for ev in trace.events
            if _dist(ev.location, node.position) <= node.sensing_radius
        )
        sub = EventTrace(events=subset, horizon=trace.horizon, origin_hour=trace.origin_hour)
        if init_tables is not None and node.id in init_tables:
            table = init_tables[node.id].copy()
        elif node.qtable is not None:
            table = node.qtable.copy()
        else:
            table = QTable.zeros(n_states, len(actions))
        if config.train and table.values.shape != (n_states, len(actions)):
            raise ScheduleError(
                f"device {node.id}: table shape {table.values.shape} "
                f"does not match {n_states} states x {len(actions)} actions"
            )
        runtimes[node.id] = _DeviceRuntime(
            node, sub, span, profile, probe_fn, seed, table, collect_logs
        )

    clusters = form_clusters(order) if len(order) > 1 else []
    eps = {i: hp.eps_max for i in ids}
    failures_by_episode: dict[int, list[int]] = {}
    for did, ep in config.failures:
        failures_by_episode.setdefault(ep, []).append(did)

    detections_by_event: dict[int, set[int]] = {}
    ep_active: list[list[int]] = []
    ep_pos = [0] * config.episodes
    ep_neg = [0] * config.episodes
    ep_reward = [0.0] * config.episodes
    ep_batt_sd = [0.0] * config.episodes
    ep_act: list[Counter] = [Counter() for _ in range(config.episodes)]
    ep_batt: list[dict[int, float]] = [{} for _ in range(config.episodes)]

    n_periods = config.episodes * 24
    for t in range(n_periods):
        day, hour_idx = divmod(t, 24)
        p_start = t * SECONDS_PER_HOUR
        p_end = min(p_start + SECONDS_PER_HOUR, span)
        if hour_idx == 0:
            fell = [d for d in failures_by_episode.get(day, []) if runtimes[d].active]
            for did in fell:
                runtimes[did].active = False
                runtimes[did].removed_at = day
            if fell:
                alive_nodes = [r.node for r in runtimes.values() if r.active]
                if not alive_nodes:
                    raise ScheduleError(f"all devices removed by episode {day}")
                clusters = form_clusters(alive_nodes) if len(alive_nodes) > 1 else []
                if config.eps_reset_on_change:
                    for r in runtimes.values():
                        if r.active:
                            eps[r.node.id] = hp.eps_max
            ep_active.append([i for i in ids if runtimes[i].active])
        hour = trace.hour_of(p_start)
        alive = [runtimes[i] for i in ids if runtimes[i].active]

        period_stats = {}
        for rt in alive:
            did = rt.node.id
            if config.train:
                state = hour * n_bins + rt.prev_bin
                a = select_action(rt.table, state, eps[did], rt.rng_for_day(day))
                rt.last_state, rt.last_action = state, a
                interval = actions[a]
                rt.engine.bill_ql("ql_infer", p_start)
            else:
                interval = config.fixed_interval
            period_stats[did] = rt.engine.run_period(p_end, interval)

        mailbox: dict[int, dict[int, tuple[int, ...]]] = {}
        own_hashes: dict[int, list[int]] = {}
        if config.train:
            for rt in alive:
                did = rt.node.id
                hashes = [
                    event_hash(*feat[eid]) for (eid, _s) in period_stats[did].detected
                ]
                own_hashes[did] = hashes
                for _ in hashes:
                    rt.engine.bill_ql("ping", p_end)
            rng_pings = (
                substream(seed, "pings", t) if config.drop_rate > 0 else None
            )
            mailbox = deliver_pings(
                [rt.node for rt in alive],
                own_hashes,
                drop_rate=config.drop_rate,
                rng=rng_pings,
            )
            for rt in alive:
                did = rt.node.id
                stats = period_stats[did]
                r = local_reward(
                    did,
                    t,
                    stats.positives,
                    stats.negatives,
                    own_hashes[did],
                    mailbox.get(did, {}),
                    clusters,
                    hp.w1,
                    config.w2,
                )
                nxt_bin = _bin_index(len(stats.detected), config.detection_bins)
                next_state = ((hour + 1) % 24) * n_bins + nxt_bin
                q_update(rt.table, rt.last_state, rt.last_action, r, next_state, hp)
                rt.engine.bill_ql("ql_update", p_end)
                rt.prev_bin = nxt_bin

        counts: Counter = Counter()
        for rt in alive:
            did = rt.node.id
            stats = period_stats[did]
            rt.activations += stats.activations
            rt.positives += stats.positives
            rt.negatives += stats.negatives
            ep_act[day][did] += stats.activations
            for eid, _s in stats.detected:
                rt.detected_ids.add(eid)
                detections_by_event.setdefault(eid, set()).add(did)
                counts[eid] += 1
        batteries = [rt.battery for rt in alive]
        b_sd = float(np.std(batteries))
        overlaps = tuple(counts[eid] for eid in sorted(counts))
        n_pos = sum(period_stats[rt.node.id].positives for rt in alive)
        n_neg = sum(period_stats[rt.node.id].negatives for rt in alive)
        ep_pos[day] += n_pos
        ep_neg[day] += n_neg
        ep_reward[day] += network_reward(
            NetworkRewardInputs(n_pos, n_neg, overlaps, b_sd, hp.w1, config.w2, config.w3)
        )
        if hour_idx == 23:
            ep_batt_sd[day] = b_sd
            for rt in alive:
                ep_batt[day][rt.node.id] = rt.battery
            if config.train:
                for rt in alive:
                    did = rt.node.id
                    eps[did] = max(hp.eps_min, eps[did] * hp.eps_decay)

    for rt in runtimes.values():
        if rt.active:
            rt.engine.finish()

    episodes = []
    for day in range(config.episodes):
        day_events = [eid for eid, d in start_day.items() if d == day]
        detected = [eid for eid in day_events if eid in detections_by_event]
        dup = (
            sum(len(detections_by_event[eid]) for eid in detected) / len(detected)
            if detected
            else 0.0
        )
        total = len(day_events)
        episodes.append(
            EpisodeMetrics(
                index=day,
                events_total=total,
                events_detected=len(detected),
                detection_rate=1.0 if total == 0 else len(detected) / total,
                mean_duplicates=dup,
                positives=ep_pos[day],
                negatives=ep_neg[day],
                global_reward=ep_reward[day],
                battery_sd=ep_batt_sd[day],
                activations=dict(sorted(ep_act[day].items())),
                batteries=dict(sorted(ep_batt[day].items())),
            )
        )
    devices = [
        DeviceSummary(
            id=i,
            activations=runtimes[i].activations,
            positives=runtimes[i].positives,
            negatives=runtimes[i].negatives,
            events_detected=len(runtimes[i].detected_ids),
            charge_mah=runtimes[i].engine.charge_mah,
            battery_level=runtimes[i].battery,
            removed_at=runtimes[i].removed_at,
        )
        for i in ids
    ]
    return NetworkReport(
        n_devices=len(ids),
        episodes=episodes,
        devices=devices,
        clusters=clusters,
        tables={i: runtimes[i].table for i in ids},
        logs={i: runtimes[i].engine.log for i in ids} if collect_logs else None,
    )
