"""Energy accounting.

Activity logs are ordered (mode, start, duration) entries that tile a span
with no gaps or overlaps. Charge is the sum of per-mode current times
duration, in mAh; projected lifetime divides battery capacity by average
current using 8766 hours per year (365.25 days).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple

from .errors import ActivityLogError

__all__ = [
    "PowerProfile",
    "LogEntry",
    "MODES",
    "charge_consumed",
    "lifetime_years",
    "event_cost",
    "validate_log",
]

HOURS_PER_YEAR = 8766.0  # 365.25 days

MODES = (
    "sleep",
    "probe",
    "event_record",
    "tx_audio",
    "tx_image",
    "camera",
    "ql_infer",
    "ql_update",
    "ping",
)


class LogEntry(NamedTuple):
    mode: str
    start: float
    duration: float


@dataclass(frozen=True)
class PowerProfile:
    """Mode currents (mA) and fixed activity durations (s).

    probe_detector picks which probe current applies; d_probe should be kept
    in step with it (record window plus detector latency).
    """

    i_sleep: float = 0.097
    i_record_3s: float = 31.57
    i_probe_goertzel: float = 32.34
    i_probe_tflite: float = 33.11
    i_camera: float = 49.33
    i_tx_audio: float = 61.33
    i_tx_image: float = 97.73
    i_ql_infer: float = 0.031
    i_ql_update: float = 0.071
    # Radio ping billed at the scheduler-inference rate for lack of a
    # measured figure; both knobs are override-able.
    i_ping: float = 0.031
    d_ping: float = 0.01
    d_probe: float = 0.13
    d_ql: float = 0.1
    d_tx_audio: float = 1.0
    d_tx_image: float = 2.0
    d_camera: float = 0.5
    battery_mah: float = 13400.0
    camera_trigger_ratio: float = 1.0 / 3.0
    probe_record_s: float = 0.1
    false_alarm_record_s: float = 3.0
    probe_detector: str = "goertzel"

    def __post_init__(self):
        for name in (
            "i_sleep",
            "i_record_3s",
            "i_probe_goertzel",
            "i_probe_tflite",
            "i_camera",
            "i_tx_audio",
            "i_tx_image",
            "i_ql_infer",
            "i_ql_update",
            "i_ping",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("d_probe", "d_ql", "d_tx_audio", "d_tx_image", "d_camera", "d_ping"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.battery_mah <= 0:
            raise ValueError("battery_mah must be positive")
        if not 0 <= self.camera_trigger_ratio <= 1:
            raise ValueError("camera_trigger_ratio must lie in [0, 1]")
        if self.probe_detector not in ("goertzel", "tflite"):
            raise ValueError(f"unknown probe_detector {self.probe_detector!r}")
        if self.probe_record_s <= 0 or self.probe_record_s > self.d_probe:
            raise ValueError("need 0 < probe_record_s <= d_probe")
        if self.false_alarm_record_s < 0:
            raise ValueError("false_alarm_record_s must be >= 0")

    def current(self, mode: str) -> float:
        """mA drawn in the given activity mode."""
        if mode == "probe":
            return (
                self.i_probe_goertzel
                if self.probe_detector == "goertzel"
                else self.i_probe_tflite
            )
        try:
            return {
                "sleep": self.i_sleep,
                "event_record": self.i_record_3s,
                "tx_audio": self.i_tx_audio,
                "tx_image": self.i_tx_image,
                "camera": self.i_camera,
                "ql_infer": self.i_ql_infer,
                "ql_update": self.i_ql_update,
                "ping": self.i_ping,
            }[mode]
        except KeyError:
            raise ValueError(f"unknown activity mode {mode!r}") from None

    def with_overrides(self, **kwargs) -> "PowerProfile":
        return replace(self, **kwargs)


# Final-boundary slack when checking coverage; interior joints must be exact.
_EDGE_TOL = 1e-6


def validate_log(entries: Iterable[LogEntry], span: float | None = None) -> list[LogEntry]:
    """Check the entries tile a contiguous span; returns them sorted by start.

    Interior entries must join exactly (each start equals the previous
    start + duration as floats). The final end may differ from ``span`` by
    float roundoff only.
    """
    log = sorted(entries, key=lambda e: (e.start, e.mode))
    expect = None
    for i, entry in enumerate(log):
        if entry.duration < 0:
            raise ActivityLogError(f"entry {i}: negative duration {entry.duration}")
        if expect is not None:
            if entry.start < expect:
                raise ActivityLogError(
                    f"entry {i}: overlap, starts at {entry.start} before {expect}"
                )
            if entry.start > expect:
                raise ActivityLogError(
                    f"entry {i}: gap, starts at {entry.start} after {expect}"
                )
        expect = entry.start + entry.duration
    if span is not None:
        start0 = log[0].start if log else 0.0
        end = expect if expect is not None else start0
        if abs((end - start0) - span) > _EDGE_TOL:
            raise ActivityLogError(
                f"log covers {end - start0}, expected span {span}"
            )
    return log


def charge_consumed(
    entries: Iterable[LogEntry],
    profile: PowerProfile,
    span: float | None = None,
) -> float:
    """mAh drawn over the log; validates coverage first.

    Accumulation runs in sorted order with one multiply-add per entry, the
    same arithmetic the simulator uses online, so online and offline totals
    agree exactly.
    """
    log = validate_log(entries, span)
    total = 0.0
    for entry in log:
        total += profile.current(entry.mode) * entry.duration / 3600.0
    return total


def lifetime_years(avg_current_ma: float, battery_mah: float) -> float:
    """Years until the battery drains at the given average draw."""
    if avg_current_ma <= 0:
        raise ValueError(f"average current must be positive, got {avg_current_ma}")
    if battery_mah <= 0:
        raise ValueError(f"battery capacity must be positive, got {battery_mah}")
    return battery_mah / avg_current_ma / HOURS_PER_YEAR


def event_cost(profile: PowerProfile, duration: float, with_camera: bool) -> float:
    """mAh for recording one event of the given length plus transmissions."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    total = profile.i_record_3s * duration + profile.i_tx_audio * profile.d_tx_audio
    if with_camera:
        total += profile.i_camera * profile.d_camera
        total += profile.i_tx_image * profile.d_tx_image
    return total / 3600.0
