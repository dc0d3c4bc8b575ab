"""Command line entry points.

Subcommands:
  gen-trace    generate a trace from the config's profile, write CSV + JSON
  run          compare fixed schedules against the trained scheduler
  run-network  simulate the multi-device network
  report       re-render the CSV files from an existing JSON summary

Every output is fully determined by the config file and the seed; a
manifest with content hashes accompanies each run. ``--seed`` and ``--out``
override the corresponding config fields.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .collab import expand_global_table, run_network
from .config import (
    ExperimentConfig,
    build_detector,
    build_network,
    build_profile,
    build_trace,
    config_to_dict,
    load_config,
)
from .errors import ConfigError, DutysimError
from .qsched import ActionSpace, init_from_distribution, save_qtable
from .sim import FixedSchedule, run_schedule, train_qlearn
from .trace import (
    SECONDS_PER_DAY,
    fmt_float,
    hourly_event_probability,
    save_trace,
)

COMPARISON_COLUMNS = [
    "name",
    "detection_rate",
    "activations",
    "positives",
    "negatives",
    "avg_current_ma",
    "lifetime_years",
]
PER_PERIOD_COLUMNS = [
    "schedule",
    "phase",
    "index",
    "hour",
    "interval",
    "activations",
    "positives",
    "negatives",
    "events_total",
    "events_detected",
    "reward",
]
SERIES_COLUMNS = [
    "episode",
    "events_total",
    "events_detected",
    "detection_rate",
    "mean_duplicates",
    "positives",
    "negatives",
    "global_reward",
    "battery_sd",
]
DEVICE_COLUMNS = ["episode", "activations", "battery_level"]


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return fmt_float(value)
    return str(value)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, cfg_dict: dict, seed: int, filenames: list[str]) -> None:
    cfg_bytes = json.dumps(cfg_dict, sort_keys=True).encode()
    manifest = {
        "seed": seed,
        "config_sha256": hashlib.sha256(cfg_bytes).hexdigest(),
        "outputs": {name: _sha256(out_dir / name) for name in sorted(filenames)},
    }
    _write_json(out_dir / "manifest.json", manifest)


def _prepare(args) -> tuple[ExperimentConfig, Path, Path]:
    if not args.config:
        raise ConfigError("--config is required")
    cfg_path = Path(args.config)
    cfg = load_config(cfg_path)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = args.out or cfg.out or "out"
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, cfg_path.parent, out_dir


def _report_summary(report) -> dict:
    return {
        "span_s": report.span_s,
        "activations": report.activations,
        "positives": report.positives,
        "negatives": report.negatives,
        "events_total": report.events_total,
        "events_detected": report.events_detected,
        "detection_rate": report.detection_rate,
        "charge_mah": report.charge_mah,
        "avg_current_ma": report.avg_current_ma,
        "lifetime_years": report.lifetime_years,
    }


def _period_rows(schedule: str, phase: str, report) -> list[dict]:
    return [
        {
            "schedule": schedule,
            "phase": phase,
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
        for p in report.periods
    ]


# -- gen-trace --------------------------------------------------------------


def cmd_gen_trace(args) -> int:
    cfg, _base, out_dir = _prepare(args)
    if cfg.generator is None:
        raise ConfigError("gen-trace needs a trace.profile section, not a file source")
    trace = build_trace(cfg)
    save_trace(trace, out_dir / "trace.csv")
    save_trace(trace, out_dir / "trace.json")
    _write_manifest(out_dir, config_to_dict(cfg), cfg.seed, ["trace.csv", "trace.json"])
    hist = [0] * 24
    for ev in trace.events:
        hist[trace.hour_of(ev.start)] += 1
    print(f"events: {len(trace.events)}  horizon: {fmt_float(trace.horizon)} s")
    print("per-hour: " + " ".join(str(n) for n in hist))
    return 0


# -- run --------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg, base_dir, out_dir = _prepare(args)
    trace = build_trace(cfg, base_dir)
    detector = build_detector(cfg)
    profile = build_profile(cfg)
    actions = ActionSpace(cfg.actions)

    t_begin = 0.0
    duration = None
    qlearn_payload = None
    comparison: list[dict] = []
    period_rows: list[dict] = []
    outputs = ["comparison.csv", "per_period.csv", "summary.json"]

    if cfg.qlearn is not None:
        q = cfg.qlearn
        if q.eval_days < 1:
            raise ConfigError(
                "schedules.qlearn.eval_days: need >= 1 so every schedule is "
                "compared on the same held-out window"
            )
        needed = (q.train_days + q.eval_days) * SECONDS_PER_DAY
        if trace.horizon < needed:
            raise ConfigError(
                f"schedules.qlearn: trace covers {trace.horizon} s but "
                f"train_days+eval_days need {needed} s"
            )
        t_begin = q.train_days * SECONDS_PER_DAY
        duration = q.eval_days * SECONDS_PER_DAY if q.eval_days else None
        init_table = None
        if q.init_scale is not None:
            train_window = dataclasses.replace(
                trace,
                events=tuple(ev for ev in trace.events if ev.start < t_begin),
                horizon=t_begin,
            )
            init_table = init_from_distribution(
                hourly_event_probability(train_window), q.init_scale, len(actions)
            )
        result = train_qlearn(
            trace,
            q.train_days,
            q.eval_days,
            cfg.hp,
            actions,
            detector,
            profile,
            cfg.seed,
            init_table=init_table,
        )
        period_rows.extend(_period_rows("qlearn", "train", result.train_report))
        if q.eval_days:
            period_rows.extend(_period_rows("qlearn", "eval", result.eval_report))
        qlearn_payload = {
            "episodes_to_convergence": result.train_report.episodes_to_convergence,
            "eps_final": result.eps_final,
            "greedy_policy": [int(a) for a in result.table.greedy_policy()],
            "policy_history": [[int(a) for a in p] for p in result.policy_history],
            "train": _report_summary(result.train_report),
            "eval": _report_summary(result.eval_report),
        }
        save_qtable_path = out_dir / "qtable.bin"
        save_qtable_path.write_bytes(save_qtable(result.table))
        outputs.append("qtable.bin")

    for interval in cfg.fixed_intervals:
        spec = FixedSchedule(interval)
        report, _ = run_schedule(
            trace,
            spec,
            detector,
            profile,
            cfg.seed,
            collect_log=False,
            t_begin=t_begin,
            duration_s=duration,
        )
        comparison.append(
            {
                "name": spec.name,
                "detection_rate": report.detection_rate,
                "activations": report.activations,
                "positives": report.positives,
                "negatives": report.negatives,
                "avg_current_ma": report.avg_current_ma,
                "lifetime_years": report.lifetime_years,
            }
        )
        period_rows.extend(_period_rows(spec.name, "eval", report))
    if qlearn_payload is not None:
        ev = qlearn_payload["eval"]
        comparison.append(
            {
                "name": "qlearn",
                "detection_rate": ev["detection_rate"],
                "activations": ev["activations"],
                "positives": ev["positives"],
                "negatives": ev["negatives"],
                "avg_current_ma": ev["avg_current_ma"],
                "lifetime_years": ev["lifetime_years"],
            }
        )

    summary = {
        "kind": "run",
        "config": config_to_dict(cfg),
        "comparison": comparison,
        "per_period": period_rows,
        "qlearn": qlearn_payload,
    }
    _write_csv(out_dir / "comparison.csv", COMPARISON_COLUMNS, comparison)
    _write_csv(out_dir / "per_period.csv", PER_PERIOD_COLUMNS, period_rows)
    _write_json(out_dir / "summary.json", summary)
    _write_manifest(out_dir, config_to_dict(cfg), cfg.seed, outputs)
    for row in comparison:
        print(
            f"{row['name']}: detection={row['detection_rate']:.4f} "
            f"activations={row['activations']} lifetime={row['lifetime_years']:.3f} yr"
        )
    return 0


# -- run-network ------------------------------------------------------------


def cmd_run_network(args) -> int:
    cfg, base_dir, out_dir = _prepare(args)
    if cfg.network is None:
        raise ConfigError("run-network needs a network section")
    trace = build_trace(cfg, base_dir)
    detector = build_detector(cfg)
    profile = build_profile(cfg)
    nodes, net_cfg = build_network(cfg, base_dir)

    init_tables = None
    if net_cfg.train and cfg.network.pretrain_days > 0:
        pre = train_qlearn(
            trace,
            cfg.network.pretrain_days,
            0,
            cfg.hp,
            net_cfg.actions,
            detector,
            profile,
            cfg.seed,
            device_id=-1,
        )
        shared = expand_global_table(pre.table, net_cfg.n_bins)
        init_tables = {node.id: shared for node in nodes}

    report = run_network(
        nodes, trace, net_cfg, detector, profile, cfg.seed, init_tables=init_tables
    )

    series_rows = [
        {
            "episode": e.index,
            "events_total": e.events_total,
            "events_detected": e.events_detected,
            "detection_rate": e.detection_rate,
            "mean_duplicates": e.mean_duplicates,
            "positives": e.positives,
            "negatives": e.negatives,
            "global_reward": e.global_reward,
            "battery_sd": e.battery_sd,
        }
        for e in report.episodes
    ]
    device_rows = {
        d.id: [
            {
                "episode": e.index,
                "activations": e.activations[d.id],
                "battery_level": e.batteries[d.id],
            }
            for e in report.episodes
            if d.id in e.activations
        ]
        for d in report.devices
    }

    outputs = ["network.json", "network_series.csv"]
    _write_json(
        out_dir / "network.json",
        {"kind": "run-network", "config": config_to_dict(cfg), "report": report.to_dict()},
    )
    _write_csv(out_dir / "network_series.csv", SERIES_COLUMNS, series_rows)
    for did in sorted(device_rows):
        name = f"device_{did}.csv"
        _write_csv(out_dir / name, DEVICE_COLUMNS, device_rows[did])
        outputs.append(name)
    if net_cfg.train:
        for did in sorted(report.tables):
            name = f"qtable_{did}.bin"
            (out_dir / name).write_bytes(save_qtable(report.tables[did]))
            outputs.append(name)
    _write_manifest(out_dir, config_to_dict(cfg), cfg.seed, outputs)

    first, last = report.episodes[0], report.episodes[-1]
    print(
        f"devices: {report.n_devices}  episodes: {len(report.episodes)}  "
        f"detection: {report.detection_rate:.4f}"
    )
    print(
        f"duplicates per detected event: {first.mean_duplicates:.3f} (ep 0) -> "
        f"{last.mean_duplicates:.3f} (ep {last.index})"
    )
    return 0


# -- report -----------------------------------------------------------------


def cmd_report(args) -> int:
    if not args.summary:
        raise ConfigError("--summary is required")
    path = Path(args.summary)
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"summary file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    out_dir = Path(args.out) if args.out else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = payload.get("kind")
    if kind == "run":
        _write_csv(out_dir / "comparison.csv", COMPARISON_COLUMNS, payload["comparison"])
        _write_csv(out_dir / "per_period.csv", PER_PERIOD_COLUMNS, payload["per_period"])
        print(f"rendered comparison.csv and per_period.csv to {out_dir}")
        return 0
    if kind == "run-network":
        report = payload["report"]
        series_rows = [
            {
                "episode": e["index"],
                "events_total": e["events_total"],
                "events_detected": e["events_detected"],
                "detection_rate": e["detection_rate"],
                "mean_duplicates": e["mean_duplicates"],
                "positives": e["positives"],
                "negatives": e["negatives"],
                "global_reward": e["global_reward"],
                "battery_sd": e["battery_sd"],
            }
            for e in report["episodes"]
        ]
        _write_csv(out_dir / "network_series.csv", SERIES_COLUMNS, series_rows)
        per_device: dict[int, list[dict]] = {}
        for e in report["episodes"]:
            for dev in e["devices"]:
                per_device.setdefault(dev["id"], []).append(
                    {
                        "episode": e["index"],
                        "activations": dev["activations"],
                        "battery_level": dev["battery_level"],
                    }
                )
        names = []
        for did in sorted(per_device):
            name = f"device_{did}.csv"
            _write_csv(out_dir / name, DEVICE_COLUMNS, per_device[did])
            names.append(name)
        print(f"rendered network_series.csv and {len(names)} device CSVs to {out_dir}")
        return 0
    raise ConfigError(f"{path}: unknown summary kind {kind!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dutysim",
        description="Trace-driven simulation of an adaptive acoustic duty-cycle scheduler.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("gen-trace", help="generate a synthetic trace")
    common(p)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("run", help="compare fixed schedules and the trained scheduler")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("run-network", help="simulate the device network")
    common(p)
    p.set_defaults(func=cmd_run_network)

    p = sub.add_parser("report", help="re-render CSVs from a JSON summary")
    p.add_argument("--summary", help="summary.json or network.json from a run")
    p.add_argument("--out", default=None, help="output directory (default: alongside)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DutysimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - single boundary for exit code 2
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
