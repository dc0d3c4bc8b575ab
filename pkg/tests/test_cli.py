"""End-to-end command line tests.

Each test drives main() in process against a small JSON config in a temp
directory, then inspects the emitted files. Determinism is checked at the
byte level since the manifest hashes promise exactly that.
"""

import hashlib
import json
from pathlib import Path

import pytest

from dutysim.cli import main
from dutysim.config import config_to_dict, parse_config
from dutysim.qsched import load_qtable
from dutysim.trace import load_trace

FLAT_PROFILE = {
    "hourly_rate": [0.5] * 24,
    "duration_mean": 3.0,
    "duration_sd": 0.0,
    "days": 3,
}


def write_config(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(data, indent=2))
    return path


def run_config(days=3, seed=5):
    profile = dict(FLAT_PROFILE, days=days)
    return {
        "seed": seed,
        "trace": {"profile": profile},
        "schedules": {
            "fixed": [3, 5, 60, 300, 1800],
            "qlearn": {"train_days": 2, "eval_days": 1},
        },
        "hyperparameters": {"w1": 0.02},
    }


def network_config(episodes=2, seed=5, n_devices=2, **net_extra):
    profile = dict(FLAT_PROFILE, days=episodes, area=[0.0, 10.0, 0.0, 10.0])
    layout = [
        {"id": i, "x": 5.0, "y": 5.0, "sensing_radius": 500.0, "comm_radius": 500.0}
        for i in range(n_devices)
    ]
    return {
        "seed": seed,
        "trace": {"profile": profile},
        "hyperparameters": {"w1": 0.02},
        "network": {"layout": layout, "episodes": episodes, **net_extra},
    }


def read_rows(path: Path) -> list[dict]:
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def tree_bytes(out_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}


# ---------------------------------------------------------------------------
# gen-trace


def test_gen_trace_zero_rate_writes_valid_empty_trace(tmp_path, capsys):
    cfg = {
        "seed": 1,
        "trace": {
            "profile": {
                "hourly_rate": [0.0] * 24,
                "duration_mean": 3.0,
                "duration_sd": 0.0,
                "days": 1,
            }
        },
    }
    cfg_path = write_config(tmp_path / "cfg.json", cfg)
    assert main(["gen-trace", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 0
    trace = load_trace(tmp_path / "out" / "trace.csv")
    assert trace.events == ()
    assert trace.horizon == 86400.0
    out = capsys.readouterr().out
    assert "events: 0" in out


def test_gen_trace_two_days_horizon(tmp_path, capsys):
    cfg = {"seed": 3, "trace": {"profile": dict(FLAT_PROFILE, days=2)}}
    cfg_path = write_config(tmp_path / "cfg.json", cfg)
    assert main(["gen-trace", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 0
    for name in ("trace.csv", "trace.json"):
        assert load_trace(tmp_path / "out" / name).horizon == 172800.0


def test_gen_trace_reruns_byte_identical(tmp_path, capsys):
    cfg_path = write_config(
        tmp_path / "cfg.json", {"seed": 9, "trace": {"profile": FLAT_PROFILE}}
    )
    for out in ("a", "b"):
        assert main(["gen-trace", "--config", str(cfg_path), "--out", str(tmp_path / out)]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_gen_trace_requires_profile_source(tmp_path, capsys):
    cfg_path = write_config(
        tmp_path / "cfg.json", {"seed": 1, "trace": {"file": "whatever.csv"}}
    )
    assert main(["gen-trace", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# run


def test_run_emits_six_row_comparison(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "cfg.json", run_config())
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    rows = read_rows(out / "comparison.csv")
    assert [r["name"] for r in rows] == [
        "fixed_3", "fixed_5", "fixed_60", "fixed_300", "fixed_1800", "qlearn",
    ]
    header = (out / "comparison.csv").read_text().splitlines()[0]
    assert header == (
        "name,detection_rate,activations,positives,negatives,"
        "avg_current_ma,lifetime_years"
    )
    table = load_qtable((out / "qtable.bin").read_bytes())
    assert table.n_states == 24 and table.n_actions == 5
    summary = json.loads((out / "summary.json").read_text())
    assert summary["kind"] == "run"
    assert len(summary["qlearn"]["policy_history"]) == 2


def test_run_reruns_byte_identical(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "cfg.json", run_config())
    for out in ("a", "b"):
        assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / out)]) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_run_manifest_hashes_every_output(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "cfg.json", run_config())
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 5
    expected = {"comparison.csv", "per_period.csv", "summary.json", "qtable.bin"}
    assert set(manifest["outputs"]) == expected
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_run_seed_flag_overrides_config(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "cfg.json", run_config())
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
    assert main(
        ["run", "--config", str(cfg_path), "--seed", "77", "--out", str(tmp_path / "b")]
    ) == 0
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["seed"] == 77
    a = (tmp_path / "a" / "comparison.csv").read_bytes()
    b = (tmp_path / "b" / "comparison.csv").read_bytes()
    assert a != b


def test_run_missing_seed_is_a_validation_error(tmp_path, capsys):
    cfg = run_config()
    del cfg["seed"]
    cfg_path = write_config(tmp_path / "cfg.json", cfg)
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 1
    assert "seed" in capsys.readouterr().err


def test_run_rejects_zero_eval_days(tmp_path, capsys):
    cfg = run_config()
    cfg["schedules"]["qlearn"]["eval_days"] = 0
    cfg_path = write_config(tmp_path / "cfg.json", cfg)
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 1
    assert "eval_days" in capsys.readouterr().err


def test_run_rejects_short_trace(tmp_path, capsys):
    cfg = run_config(days=2)  # needs 2 train + 1 eval
    cfg_path = write_config(tmp_path / "cfg.json", cfg)
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 1
    assert "train_days" in capsys.readouterr().err


def test_run_consumes_generated_trace_file(tmp_path, capsys):
    gen_cfg = write_config(
        tmp_path / "gen.json", {"seed": 9, "trace": {"profile": FLAT_PROFILE}}
    )
    assert main(["gen-trace", "--config", str(gen_cfg), "--out", str(tmp_path)]) == 0
    cfg = run_config()
    cfg["trace"] = {"file": "trace.csv"}  # resolved relative to the config
    cfg_path = write_config(tmp_path / "cfg.json", cfg)
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")]) == 0
    rows = read_rows(tmp_path / "out" / "comparison.csv")
    assert len(rows) == 6


def test_run_without_qlearn_section(tmp_path, capsys):
    cfg = run_config()
    cfg["schedules"]["qlearn"] = None
    cfg["schedules"]["fixed"] = [60, 300]
    cfg_path = write_config(tmp_path / "cfg.json", cfg)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    rows = read_rows(out / "comparison.csv")
    assert [r["name"] for r in rows] == ["fixed_60", "fixed_300"]
    assert not (out / "qtable.bin").exists()


# ---------------------------------------------------------------------------
# run-network


def test_network_single_device_matches_run(tmp_path, capsys):
    # One covering device on a fixed schedule is exactly the single-device
    # simulator; the network totals must agree with cmd_run's row.
    net_cfg = network_config(
        episodes=2, n_devices=1, train=False, fixed_interval=60.0
    )
    net_path = write_config(tmp_path / "net.json", net_cfg)
    out_net = tmp_path / "out_net"
    assert main(["run-network", "--config", str(net_path), "--out", str(out_net)]) == 0

    run_cfg = {
        "seed": 5,
        "trace": {"profile": dict(FLAT_PROFILE, days=2, area=[0.0, 10.0, 0.0, 10.0])},
        "schedules": {"fixed": [60], "qlearn": None},
        "hyperparameters": {"w1": 0.02},
    }
    run_path = write_config(tmp_path / "run.json", run_cfg)
    out_run = tmp_path / "out_run"
    assert main(["run", "--config", str(run_path), "--out", str(out_run)]) == 0

    report = json.loads((out_net / "network.json").read_text())["report"]
    row = read_rows(out_run / "comparison.csv")[0]
    assert report["devices"][0]["activations"] == int(row["activations"])
    assert report["devices"][0]["positives"] == int(row["positives"])
    assert report["detection_rate"] == float(row["detection_rate"])


def test_network_emits_one_csv_per_device(tmp_path, capsys):
    cfg_path = write_config(
        tmp_path / "cfg.json", network_config(episodes=1, n_devices=5)
    )
    out = tmp_path / "out"
    assert main(["run-network", "--config", str(cfg_path), "--out", str(out)]) == 0
    device_csvs = sorted(p.name for p in out.glob("device_*.csv"))
    assert device_csvs == [f"device_{i}.csv" for i in range(5)]
    qtables = sorted(p.name for p in out.glob("qtable_*.bin"))
    assert qtables == [f"qtable_{i}.bin" for i in range(5)]
    assert (out / "network.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {
        "network.json", "network_series.csv",
        *device_csvs, *qtables,
    }


def test_network_failure_marks_device_inactive(tmp_path, capsys):
    cfg_path = write_config(
        tmp_path / "cfg.json",
        network_config(episodes=3, n_devices=2, failures=[[1, 1]]),
    )
    out = tmp_path / "out"
    assert main(["run-network", "--config", str(cfg_path), "--out", str(out)]) == 0
    report = json.loads((out / "network.json").read_text())["report"]
    removed = {d["id"]: d["removed_at"] for d in report["devices"]}
    assert removed == {0: None, 1: 1}
    # The casualty appears in the series only before its removal episode.
    assert len(read_rows(out / "device_1.csv")) == 1
    assert len(read_rows(out / "device_0.csv")) == 3


def test_network_reruns_byte_identical(tmp_path, capsys):
    cfg_path = write_config(
        tmp_path / "cfg.json",
        network_config(episodes=2, n_devices=2, pretrain_days=1),
    )
    for out in ("a", "b"):
        assert main(
            ["run-network", "--config", str(cfg_path), "--out", str(tmp_path / out)]
        ) == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_network_requires_network_section(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "cfg.json", run_config())
    assert main(["run-network", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 1
    assert "network" in capsys.readouterr().err


def test_network_layout_file_source(tmp_path, capsys):
    cfg = network_config(episodes=1, n_devices=1)
    layout = cfg["network"].pop("layout")
    cfg["network"]["layout_file"] = "layout.json"
    (tmp_path / "layout.json").write_text(json.dumps({"devices": layout}))
    cfg_path = write_config(tmp_path / "cfg.json", cfg)
    out = tmp_path / "out"
    assert main(["run-network", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert (out / "device_0.csv").exists()


# ---------------------------------------------------------------------------
# report


def test_report_rerenders_run_csvs(tmp_path, capsys):
    cfg_path = write_config(tmp_path / "cfg.json", run_config())
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    re_out = tmp_path / "re"
    assert main(
        ["report", "--summary", str(out / "summary.json"), "--out", str(re_out)]
    ) == 0
    for name in ("comparison.csv", "per_period.csv"):
        assert (re_out / name).read_bytes() == (out / name).read_bytes()


def test_report_rerenders_network_csvs(tmp_path, capsys):
    cfg_path = write_config(
        tmp_path / "cfg.json", network_config(episodes=2, n_devices=2)
    )
    out = tmp_path / "out"
    assert main(["run-network", "--config", str(cfg_path), "--out", str(out)]) == 0
    re_out = tmp_path / "re"
    assert main(
        ["report", "--summary", str(out / "network.json"), "--out", str(re_out)]
    ) == 0
    for name in ("network_series.csv", "device_0.csv", "device_1.csv"):
        assert (re_out / name).read_bytes() == (out / name).read_bytes()


def test_report_rejects_bad_summaries(tmp_path, capsys):
    assert main(["report", "--summary", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["report", "--summary", str(bad)]) == 1
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"kind": "mystery"}))
    assert main(["report", "--summary", str(unknown)]) == 1
    assert main(["report"]) == 1


# ---------------------------------------------------------------------------
# exit codes and config round trip


def test_missing_config_flag_is_validation_error(tmp_path, capsys):
    assert main(["run"]) == 1
    assert "config" in capsys.readouterr().err


def test_unreadable_config_is_runtime_error(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path)]) == 2
    assert "runtime error" in capsys.readouterr().err


def test_config_round_trip_is_identity(tmp_path):
    cfg_dict = network_config(episodes=4, n_devices=3, failures=[[2, 2]],
                              pretrain_days=2, drop_rate=0.25)
    cfg_dict["schedules"] = {
        "fixed": [3, 60],
        "qlearn": {"train_days": 4, "eval_days": 2, "init_scale": 0.5},
    }
    cfg_dict["detector"] = {"kind": "goertzel", "noise_sd": 0.1, "threshold": 5000.0}
    cfg_dict["power"] = {"battery_mah": 2000.0, "probe_detector": "tflite"}
    cfg_dict["actions"] = [3, 5, 60]
    cfg_dict["out"] = "somewhere"
    cfg = parse_config(cfg_dict)
    once = config_to_dict(cfg)
    again = config_to_dict(parse_config(once))
    assert once == again
    assert parse_config(once) == cfg


def test_parse_config_names_offending_fields(tmp_path):
    from dutysim.errors import ConfigError

    base = run_config()
    cases = [
        ({**base, "mystery": 1}, "mystery"),
        ({**base, "trace": {}}, "trace"),
        ({**base, "trace": {"file": "x", "profile": FLAT_PROFILE}}, "trace"),
        ({**base, "detector": {"kind": "psychic"}}, "kind"),
        ({**base, "actions": [3]}, "actions"),
        ({**base, "power": {"i_warp": 1.0}}, "i_warp"),
        ({**base, "hyperparameters": {"gamma": 2.0}}, "hyperparameters"),
        ({**base, "seed": "five"}, "seed"),
    ]
    for data, needle in cases:
        with pytest.raises(ConfigError) as err:
            parse_config(data)
        assert needle in str(err.value)
