"""Trace-driven schedule simulation.

The simulator walks a single device timeline over a trace. At each wake it
bills a probe (record window plus detector latency), asks the detector about
events overlapping the record window, and on a fire records until the last
overlapping event ends. Events that begin while the mic is already on count
as detected and extend the recording. Each detected event bills an audio
transmission, and a deterministic accumulator triggers the camera plus image
transmission for one event in three (by default). The next wake is
max(scheduled wake, end of current activity), where the scheduled wake is the
previous probe start plus the active interval.

Scheduling periods are hours. A fixed schedule keeps one interval; a learned
schedule picks the interval per period from a Q-table, greedily when
evaluating, epsilon-greedily with per-period updates when training. Training
episodes are whole days; epsilon decays once per episode.

The engine is event-driven: empty stretches between events are accounted for
arithmetically, so cost scales with events and periods rather than probes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detect import DetectorModel, gate
from .errors import ScheduleError
from .power import LogEntry, PowerProfile
from .qsched import (
    ActionSpace,
    Hyperparameters,
    QTable,
    q_update,
    select_action,
)
from .rng import substream
from .trace import SECONDS_PER_DAY, SECONDS_PER_HOUR, EventTrace

__all__ = [
    "FixedSchedule",
    "GreedySchedule",
    "PeriodRecord",
    "SimReport",
    "TrainResult",
    "run_schedule",
    "train_qlearn",
    "compare_schedules",
    "convergence_episodes",
    "ComparisonRow",
]


@dataclass(frozen=True)
class FixedSchedule:
    """Wake every ``interval`` seconds, all day."""

    interval: float

    @property
    def name(self) -> str:
        return f"fixed_{self.interval:g}"


@dataclass(frozen=True)
class GreedySchedule:
    """Per-hour interval from the argmax row of a trained table."""

    table: QTable
    actions: ActionSpace = ActionSpace()

    @property
    def name(self) -> str:
        return "qlearn"


ScheduleSpec = FixedSchedule | GreedySchedule


@dataclass(frozen=True)
class PeriodRecord:
    index: int
    hour: int
    interval: float
    activations: int
    positives: int
    negatives: int
    events_total: int
    events_detected: int
    reward: float


@dataclass
class SimReport:
    span_s: float
    periods: list[PeriodRecord]
    activations: int
    positives: int
    negatives: int
    events_total: int
    events_detected: int
    detection_rate: float
    zero_events: bool
    charge_mah: float
    avg_current_ma: float
    lifetime_years: float
    episodes_to_convergence: int | None = None

    def to_dict(self) -> dict:
        return {
            "span_s": self.span_s,
            "activations": self.activations,
            "positives": self.positives,
            "negatives": self.negatives,
            "events_total": self.events_total,
            "events_detected": self.events_detected,
            "detection_rate": self.detection_rate,
            "zero_events": self.zero_events,
            "charge_mah": self.charge_mah,
            "avg_current_ma": self.avg_current_ma,
            "lifetime_years": self.lifetime_years,
            "episodes_to_convergence": self.episodes_to_convergence,
            "periods": [
                {
                    "index": p.index,
                    "hour": p.hour,
                    "interval": p.interval,
                    "activations": p.activations,
                    "positives": p.positives,
                    "negatives": p.negatives,
                    "events_total": p.events_total,
                    "events_detected": p.events_detected,
                    "reward": p.reward,
                }
                for p in self.periods
            ],
        }


# -- detector wiring --------------------------------------------------------


def make_probe_fn(model: DetectorModel):
    """Turn a DetectorModel into probe(bands, rng) -> bool.

    ``bands`` lists the dominant band of each event overlapping the record
    window (None for untagged events). Abstract models with rates of exactly
    0 or 1 consume no randomness.
    """
    if model.kind == "abstract":
        tp, fp = model.tp_rate, model.fp_rate

        def probe_fn(bands, rng):
            rate = tp if bands else fp
            if rate >= 1.0:
                return True
            if rate <= 0.0:
                return False
            return bool(rng.random() < rate)

        return probe_fn

    bank = model.bank
    amplitude = model.tone_amplitude
    noise_sd = model.noise_sd
    default_band = model.default_band
    half_bw = model.event_bandwidth_hz / 2.0
    nyquist = bank.sample_rate / 2.0
    bank_freqs = tuple(bank.freq_of(b) for b in bank.target_bins)
    t = np.arange(bank.window_len, dtype=np.float64) / bank.sample_rate

    def _event_freqs(band):
        center = band if band is not None else default_band
        freqs = [f for f in bank_freqs if abs(f - center) <= half_bw]
        if freqs:
            return freqs
        # Out-of-bank event: its energy is in the air but the filter bank
        # mostly ignores it, so the median gate will usually stay quiet.
        if 0.0 < center < nyquist:
            return [center]
        return []

    def probe_fn(bands, rng):
        window = np.zeros(bank.window_len)
        for band in bands:
            for f in _event_freqs(band):
                window += amplitude * np.sin(2.0 * np.pi * f * t)
        if noise_sd > 0:
            window += rng.normal(0.0, noise_sd, size=bank.window_len)
        return gate(bank, window)

    return probe_fn


# -- timeline engine --------------------------------------------------------


@dataclass
class PeriodStats:
    activations: int = 0
    positives: int = 0
    negatives: int = 0
    detected: list = field(default_factory=list)  # (event_id, event_start)


class TimelineEngine:
    """One device's timeline over [t_begin, t_end) of a trace.

    Periods are driven externally via run_period so a caller can interleave
    action selection, reward computation, and billing between periods. All
    methods keep the busy frontier, the pending wake, and the charge total
    consistent; the exported log (when collected) tiles the window exactly.
    """

    def __init__(
        self,
        trace: EventTrace,
        t_begin: float,
        t_end: float,
        profile: PowerProfile,
        probe_fn,
        rng_for_day,
        collect_log: bool = False,
    ):
        if not 0 <= t_begin < t_end <= trace.horizon:
            raise ScheduleError(
                f"window [{t_begin}, {t_end}) outside trace horizon {trace.horizon}"
            )
        self.trace = trace
        self.starts = trace.starts
        self.ends = trace.ends
        self.profile = profile
        self.probe_fn = probe_fn
        self.rng_for_day = rng_for_day
        self.t_begin = t_begin
        self.horizon = t_end
        self.t = t_begin
        self.next_wake = t_begin
        self.ptr = 0
        self.detected_mask = np.zeros(len(trace), dtype=bool)
        self.detected: list[tuple[int, float]] = []
        self.cam_acc = 0.0
        self.charge_mah = 0.0
        self.log: list[LogEntry] | None = [] if collect_log else None
        self._bands = [ev.band for ev in trace.events]
        self._ids = [ev.id for ev in trace.events]

    def _emit(self, mode: str, duration: float) -> None:
        if duration <= 0:
            return
        if self.t + duration > self.horizon:
            duration = self.horizon - self.t
            if duration <= 0:
                return
        self.charge_mah += self.profile.current(mode) * duration / 3600.0
        if self.log is not None:
            self.log.append(LogEntry(mode, self.t, duration))
        self.t += duration

    def _sleep_to(self, target: float) -> None:
        if target > self.t:
            self._emit("sleep", target - self.t)

    def bill_ql(self, mode: str, at: float) -> None:
        """Insert a scheduler inference/update/ping activity at the frontier."""
        self._sleep_to(at)
        duration = self.profile.d_ping if mode == "ping" else self.profile.d_ql
        self._emit(mode, duration)

    def run_period(self, p_end: float, interval: float) -> PeriodStats:
        """Process all wakes scheduled before p_end at the given interval."""
        if interval <= self.profile.d_probe:
            raise ScheduleError(
                f"interval {interval} s not longer than the probe ({self.profile.d_probe} s)"
            )
        stats = PeriodStats()
        while self.next_wake < p_end and self.next_wake < self.horizon:
            w = max(self.next_wake, self.t)
            if w >= p_end or w >= self.horizon:
                # Activity pushed the effective wake out of this period.
                self.next_wake = w
                break
            self._probe(w, stats)
            self.next_wake = max(w + interval, self.t)
        return stats

    def finish(self) -> None:
        self._sleep_to(self.horizon)

    def _probe(self, w: float, stats: PeriodStats) -> None:
        p = self.profile
        self._sleep_to(w)
        self._emit("probe", p.d_probe)
        window_end = w + p.probe_record_s
        starts, ends = self.starts, self.ends
        n = len(starts)
        while self.ptr < n and ends[self.ptr] <= w:
            self.ptr += 1
        hit = []
        j = self.ptr
        while j < n and starts[j] < window_end:
            if ends[j] > w:
                hit.append(j)
            j += 1
        rng = self.rng_for_day(int(w // SECONDS_PER_DAY))
        fired = self.probe_fn([self._bands[k] for k in hit], rng)
        stats.activations += 1
        if not fired:
            stats.negatives += 1
            return

        detected_now = []
        for k in hit:
            if not self.detected_mask[k]:
                self.detected_mask[k] = True
                detected_now.append(k)
        rec_start = self.t
        if hit:
            rec_end = max(ends[k] for k in hit)
        else:
            rec_end = rec_start + p.false_alarm_record_s
        if rec_end > rec_start:
            # Mic stays on; events starting meanwhile are captured and
            # stretch the recording to their own ends.
            k = self.ptr
            while k < n and starts[k] < rec_end:
                if ends[k] > rec_start and not self.detected_mask[k]:
                    self.detected_mask[k] = True
                    detected_now.append(k)
                    if ends[k] > rec_end:
                        rec_end = ends[k]
                k += 1
            self._emit("event_record", rec_end - rec_start)

        if detected_now:
            stats.positives += 1
            for k in detected_now:
                stats.detected.append((self._ids[k], starts[k]))
                self.detected.append((self._ids[k], starts[k]))
                self._emit("tx_audio", p.d_tx_audio)
                self.cam_acc += p.camera_trigger_ratio
                if self.cam_acc >= 1.0 - 1e-9:
                    self.cam_acc -= 1.0
                    self._emit("camera", p.d_camera)
                    self._emit("tx_image", p.d_tx_image)
        else:
            # False alarm: the clip still gets recorded and sent.
            stats.negatives += 1
            self._emit("tx_audio", p.d_tx_audio)


# -- policies ---------------------------------------------------------------


class _FixedPolicy:
    trains = False
    bills_infer = False

    def __init__(self, interval: float):
        self.interval = interval

    def begin_period(self, period: int, hour: int) -> float:
        return self.interval

    def end_period(self, period: int, hour: int, stats: PeriodStats) -> None:
        pass


class _GreedyPolicy:
    trains = False
    bills_infer = True

    def __init__(self, table: QTable, actions: ActionSpace):
        self.table = table
        self.actions = actions

    def begin_period(self, period: int, hour: int) -> float:
        return self.actions[self.table.greedy_action(hour)]

    def end_period(self, period: int, hour: int, stats: PeriodStats) -> None:
        pass


class _TrainPolicy:
    trains = True
    bills_infer = True

    def __init__(self, table, hp, actions, rng_for_day, w1_by_hour):
        self.table = table
        self.hp = hp
        self.actions = actions
        self.rng_for_day = rng_for_day
        self.w1 = w1_by_hour
        self.eps = hp.eps_max
        self.last_action = 0

    def begin_period(self, period: int, hour: int) -> float:
        rng = self.rng_for_day(period // 24)
        self.last_action = select_action(self.table, hour, self.eps, rng)
        return self.actions[self.last_action]

    def end_period(self, period: int, hour: int, stats: PeriodStats) -> None:
        r = stats.positives - self.w1[hour] * stats.negatives
        q_update(self.table, hour, self.last_action, r, (hour + 1) % 24, self.hp)


def _resolve_w1(hp: Hyperparameters, w1_by_hour) -> np.ndarray:
    if w1_by_hour is not None:
        arr = np.asarray(w1_by_hour, dtype=np.float64)
        if arr.shape != (24,):
            raise ScheduleError("w1_by_hour needs exactly 24 entries")
        return arr
    return np.full(24, hp.w1, dtype=np.float64)


def _run_periods(engine: TimelineEngine, policy, t_begin, n_periods, w1_by_hour, first_period=0):
    """Drive the engine period by period; returns raw period tuples.

    first_period keeps the global period index honest when a run is driven
    in chunks (training drives one day at a time); the index feeds the
    policy's per-day stream lookup.
    """
    rows = []
    for p in range(n_periods):
        p_global = first_period + p
        p_start = t_begin + p * SECONDS_PER_HOUR
        p_end = min(p_start + SECONDS_PER_HOUR, engine.horizon)
        hour = engine.trace.hour_of(p_start)
        interval = policy.begin_period(p_global, hour)
        if policy.bills_infer:
            engine.bill_ql("ql_infer", p_start)
        stats = engine.run_period(p_end, interval)
        if policy.trains:
            engine.bill_ql("ql_update", p_end)
        policy.end_period(p_global, hour, stats)
        rows.append((p_global, hour, interval, stats))
    return rows


def _build_report(
    trace: EventTrace,
    t_begin: float,
    t_end: float,
    rows,
    engine: TimelineEngine,
    w1_by_hour: np.ndarray,
    profile: PowerProfile,
) -> SimReport:
    n_periods = len(rows)
    # Events intersecting the window, attributed to the period of their
    # start (carry-ins from before the window land in period 0).
    totals = np.zeros(n_periods, dtype=np.int64)
    for ev in trace.events:
        if ev.start >= t_end or ev.end <= t_begin:
            continue
        idx = int((ev.start - t_begin) // SECONDS_PER_HOUR) if ev.start >= t_begin else 0
        if 0 <= idx < n_periods:
            totals[idx] += 1
    detected = np.zeros(n_periods, dtype=np.int64)
    for _, start in engine.detected:
        idx = int((start - t_begin) // SECONDS_PER_HOUR) if start >= t_begin else 0
        if 0 <= idx < n_periods:
            detected[idx] += 1

    periods = []
    for (p, hour, interval, stats) in rows:
        r = stats.positives - w1_by_hour[hour] * stats.negatives
        periods.append(
            PeriodRecord(
                index=p,
                hour=hour,
                interval=interval,
                activations=stats.activations,
                positives=stats.positives,
                negatives=stats.negatives,
                events_total=int(totals[p]),
                events_detected=int(detected[p]),
                reward=r,
            )
        )
    events_total = int(totals.sum())
    events_detected = int(detected.sum())
    zero_events = events_total == 0
    rate = 1.0 if zero_events else events_detected / events_total
    span = t_end - t_begin
    avg_ma = engine.charge_mah / (span / 3600.0)
    return SimReport(
        span_s=span,
        periods=periods,
        activations=sum(p.activations for p in periods),
        positives=sum(p.positives for p in periods),
        negatives=sum(p.negatives for p in periods),
        events_total=events_total,
        events_detected=events_detected,
        detection_rate=rate,
        zero_events=zero_events,
        charge_mah=engine.charge_mah,
        avg_current_ma=avg_ma,
        lifetime_years=(
            profile.battery_mah / avg_ma / 8766.0 if avg_ma > 0 else math.inf
        ),
    )


def _day_rng_provider(seed: int, device_id: int):
    cache: dict[int, np.random.Generator] = {}

    def provider(day: int) -> np.random.Generator:
        gen = cache.get(day)
        if gen is None:
            gen = substream(seed, "device", device_id, "day", day)
            cache[day] = gen
        return gen

    return provider


# -- public operations ------------------------------------------------------


def run_schedule(
    trace: EventTrace,
    spec: ScheduleSpec,
    detector: DetectorModel,
    profile: PowerProfile,
    seed: int,
    *,
    collect_log: bool = True,
    device_id: int = 0,
    t_begin: float = 0.0,
    duration_s: float | None = None,
) -> tuple[SimReport, list[LogEntry] | None]:
    """Simulate one schedule over a window of the trace.

    Returns the report and, when collect_log, an activity log tiling the
    window exactly.
    """
    t_end = trace.horizon if duration_s is None else t_begin + duration_s
    if isinstance(spec, FixedSchedule):
        if spec.interval <= profile.d_probe:
            raise ScheduleError(
                f"interval {spec.interval} s not longer than the probe"
            )
        policy = _FixedPolicy(spec.interval)
        hp = Hyperparameters()
    elif isinstance(spec, GreedySchedule):
        if min(spec.actions.intervals) <= profile.d_probe:
            raise ScheduleError("action space contains intervals shorter than a probe")
        if spec.table.n_states != 24:
            raise ScheduleError(
                f"greedy schedule needs a 24-state table, got {spec.table.n_states}"
            )
        policy = _GreedyPolicy(spec.table, spec.actions)
        hp = Hyperparameters()
    else:
        raise ScheduleError(f"unknown schedule spec {spec!r}")
    w1 = _resolve_w1(hp, None)
    probe_fn = make_probe_fn(detector)
    engine = TimelineEngine(
        trace,
        t_begin,
        t_end,
        profile,
        probe_fn,
        _day_rng_provider(seed, device_id),
        collect_log=collect_log,
    )
    n_periods = int(math.ceil((t_end - t_begin) / SECONDS_PER_HOUR))
    rows = _run_periods(engine, policy, t_begin, n_periods, w1)
    engine.finish()
    report = _build_report(trace, t_begin, t_end, rows, engine, w1, profile)
    return report, engine.log


@dataclass
class TrainResult:
    table: QTable
    train_report: SimReport
    eval_report: SimReport
    policy_history: list[np.ndarray]
    eps_final: float
    train_log: list[LogEntry] | None = None
    eval_log: list[LogEntry] | None = None


def train_qlearn(
    trace: EventTrace,
    train_days: int,
    eval_days: int,
    hp: Hyperparameters,
    actions: ActionSpace,
    detector: DetectorModel,
    profile: PowerProfile,
    seed: int,
    *,
    init_table: QTable | None = None,
    w1_by_hour=None,
    device_id: int = 0,
    collect_logs: bool = False,
) -> TrainResult:
    """Train over the leading days of the trace, then evaluate greedily.

    Each training day is one episode: per period an action is chosen
    epsilon-greedily at period start, held for the period, and updated at
    period end with the period reward; the next-state index wraps from the
    last hour to the first. Epsilon decays once per episode. Evaluation runs
    the greedy policy over the following days with learning frozen.
    """
    if train_days < 1 or eval_days < 0:
        raise ScheduleError("need train_days >= 1 and eval_days >= 0")
    needed = (train_days + eval_days) * SECONDS_PER_DAY
    if trace.horizon < needed:
        raise ScheduleError(
            f"trace horizon {trace.horizon} s shorter than {needed} s of episodes"
        )
    if min(actions.intervals) <= profile.d_probe:
        raise ScheduleError("action space contains intervals shorter than a probe")
    if init_table is not None:
        if init_table.values.shape != (24, len(actions)):
            raise ScheduleError("init_table shape does not match 24 x actions")
        table = init_table.copy()
    else:
        table = QTable.zeros(24, len(actions))
    w1 = _resolve_w1(hp, w1_by_hour)
    probe_fn = make_probe_fn(detector)
    rng_for_day = _day_rng_provider(seed, device_id)

    train_end = train_days * SECONDS_PER_DAY
    engine = TimelineEngine(
        trace, 0.0, train_end, profile, probe_fn, rng_for_day, collect_log=collect_logs
    )
    policy = _TrainPolicy(table, hp, actions, rng_for_day, w1)
    history: list[np.ndarray] = []
    all_rows = []
    for day in range(train_days):
        all_rows.extend(
            _run_periods(
                engine, policy, day * SECONDS_PER_DAY, 24, w1, first_period=day * 24
            )
        )
        policy.eps = max(hp.eps_min, policy.eps * hp.eps_decay)
        history.append(table.greedy_policy())
    engine.finish()
    train_report = _build_report(trace, 0.0, train_end, all_rows, engine, w1, profile)
    train_report.episodes_to_convergence = convergence_episodes(history)

    if eval_days > 0:
        eval_spec = GreedySchedule(table=table, actions=actions)
        eval_report, eval_log = run_schedule(
            trace,
            eval_spec,
            detector,
            profile,
            seed,
            collect_log=collect_logs,
            device_id=device_id,
            t_begin=train_end,
            duration_s=eval_days * SECONDS_PER_DAY,
        )
        eval_report.episodes_to_convergence = train_report.episodes_to_convergence
    else:
        eval_report = train_report
        eval_log = None

    return TrainResult(
        table=table,
        train_report=train_report,
        eval_report=eval_report,
        policy_history=history,
        eps_final=policy.eps,
        train_log=engine.log,
        eval_log=eval_log,
    )


def convergence_episodes(policy_history: list[np.ndarray]) -> int | None:
    """First episode index after which the greedy policy never changes.

    Returns None for an empty history or when the policy was still changing
    at the final episode (no evidence of stability).
    """
    if not policy_history:
        return None
    last_change = 0
    for i in range(1, len(policy_history)):
        if not np.array_equal(policy_history[i], policy_history[i - 1]):
            last_change = i
    if last_change == len(policy_history) - 1 and len(policy_history) > 1:
        return None
    return last_change


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    detection_rate: float
    activations: int
    positives: int
    negatives: int
    avg_current_ma: float
    lifetime_years: float


def compare_schedules(
    trace: EventTrace,
    specs: list[ScheduleSpec],
    detector: DetectorModel,
    profile: PowerProfile,
    seed: int,
    *,
    names: list[str] | None = None,
    t_begin: float = 0.0,
    duration_s: float | None = None,
) -> list[ComparisonRow]:
    """Run every spec on the identical trace and seed; one row per spec."""
    if names is not None and len(names) != len(specs):
        raise ScheduleError("names must match specs one to one")
    rows = []
    for i, spec in enumerate(specs):
        report, _ = run_schedule(
            trace,
            spec,
            detector,
            profile,
            seed,
            collect_log=False,
            t_begin=t_begin,
            duration_s=duration_s,
        )
        rows.append(
            ComparisonRow(
                name=names[i] if names else spec.name,
                detection_rate=report.detection_rate,
                activations=report.activations,
                positives=report.positives,
                negatives=report.negatives,
                avg_current_ma=report.avg_current_ma,
                lifetime_years=report.lifetime_years,
            )
        )
    return rows
