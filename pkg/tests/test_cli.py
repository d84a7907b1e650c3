import asyncio
import csv
import json

import pytest

from radarfuse import serialize as ser
from radarfuse.cli import EXIT_CONFIG, EXIT_OK, RunConfig, main
from radarfuse.fusion import FcParams
from radarfuse.live import run_live
from radarfuse.presets import SETUPS, make_scenario
from radarfuse.sim import KINDS, scenario_paths, simulate_sensors


def write_config(path, **kw):
    doc = {"schema": "run-config", "version": "1.0", **kw}
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.mark.parametrize("setup", sorted(SETUPS))
@pytest.mark.parametrize("kind", KINDS)
def test_gen_scenario_presets(tmp_path, setup, kind):
    out = tmp_path / "sc.json"
    assert main(["gen-scenario", "--setup", setup, "--kind", kind, "--n-targets", "2", "--out", str(out)]) == EXIT_OK
    sc = ser.load_scenario(out)
    sc.validate()
    for path in scenario_paths(sc):
        assert (path.p >= 0).all() and (path.p[:, 0] <= 7).all() and (path.p[:, 1] <= 4).all()


def test_setup_topology():
    import numpy as np

    s1 = make_scenario("setup-1", "parallel", 1).sensors
    # facing pairs across both axes; neighbours perpendicular
    assert abs(abs(s1[0].pose.theta - s1[2].pose.theta) - 180) < 1e-9
    assert abs(abs(s1[1].pose.theta - s1[3].pose.theta) - 180) < 1e-9
    assert abs(abs(s1[0].pose.theta - s1[1].pose.theta) - 90) < 1e-9
    s2 = make_scenario("setup-2", "parallel", 1).sensors
    r = [np.linalg.norm(s.pose.t - [3.5, 2.0]) for s in s2]
    assert max(r) - min(r) < 1e-12


def test_run_noiseless_single_target(tmp_path):
    cfg = write_config(tmp_path / "c.json",
                       scenario={"setup": "setup-1", "kind": "in-line", "n_targets": 1, "duration": 15.0},
                       model={"sigma_r": 0.0, "sigma_theta_deg": 0.0, "p_d": 1.0, "sigma_tau": 0.0},
                       warmup=1.0)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["mot"]["MOTA"] == 1.0
    assert rep["calib"] is None


def test_run_selfcal_has_calib_report_and_is_deterministic(tmp_path):
    cfg = write_config(tmp_path / "c.json",
                       scenario={"setup": "setup-1", "kind": "parallel", "n_targets": 2, "duration": 20.0},
                       calib="selfcal", seed=4)
    for d in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / d)]) == EXIT_OK
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert set(rep["calib"]["sensors"]) == {"1", "2", "3", "4"}
    for f in ("report.json", "run.ndjson", "messages.ndjson", "calibration.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_eval_and_selfcal_commands(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--scenario", _scenario_file(tmp_path), "--out", str(out)]) == EXIT_OK
    assert main(["eval", str(out / "run.ndjson"), "--out", str(tmp_path / "e.json")]) == EXIT_OK
    a = json.loads((out / "report.json").read_text())
    b = json.loads((tmp_path / "e.json").read_text())
    assert a == b
    assert main(["selfcal", str(out / "messages.ndjson"), "--out", str(tmp_path / "cal.json")]) == EXIT_OK
    cal = ser.load_calibration(tmp_path / "cal.json")
    assert set(cal.sensors) == {1, 2, 3, 4}
    assert (tmp_path / "cal_report.json").exists()
    # a calibration file can drive a later run
    assert main(["run", "--scenario", _scenario_file(tmp_path), "--calib", str(tmp_path / "cal.json"),
                 "--out", str(tmp_path / "o2")]) == EXIT_OK


def _scenario_file(tmp_path):
    path = tmp_path / "sc.json"
    if not path.exists():
        main(["gen-scenario", "--setup", "setup-1", "--kind", "parallel", "--n-targets", "2", "--duration", "15",
              "--out", str(path)])
    return str(path)


def test_sweep_rate_table(tmp_path):
    out = tmp_path / "sw"
    cfg = write_config(tmp_path / "c.json", scenario={"preset": "occlusion", "duration": 12.0})
    assert main(["sweep-rate", "--config", cfg, "--seed", "0", "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [float(r["tc_over_ts"]) for r in rows] == [0.2, 0.5, 0.8, 1.0, 2.0, 5.0, 10.0, 25.0]
    assert main(["sweep-rate", "--config", cfg, "--tc-over-ts", "1,5", "--seed", "0", "--seed", "1",
                 "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [(r["seed"], r["tc_over_ts"]) for r in rows] == [("0", "1.0"), ("0", "5.0"), ("1", "1.0"), ("1", "5.0")]


@pytest.mark.parametrize("argv", [
    ["run", "--scenario", "does-not-exist.json"],
    ["run", "--tc-over-ts", "0"],
    ["run", "--calib", "missing-calibration.json"],
    ["gen-scenario", "--kind", "zigzag"],
    ["gen-scenario", "--n-targets", "9"],
    ["no-such-command"],
])
def test_config_errors_exit_2(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "no-such-command" else argv) == EXIT_CONFIG
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "config"


def test_bad_config_contents_exit_2(tmp_path):
    bad_major = tmp_path / "v2.json"
    bad_major.write_text(json.dumps({"schema": "run-config", "version": "2.0"}))
    assert main(["run", "--config", str(bad_major)]) == EXIT_CONFIG
    unknown = write_config(tmp_path / "u.json", colour="red")
    assert main(["run", "--config", unknown]) == EXIT_CONFIG
    bad_fc = write_config(tmp_path / "f.json", fc={"A_th": 18, "bogus": 1})
    assert main(["run", "--config", bad_fc, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_runtime_failure_exit_3(tmp_path):
    rec = tmp_path / "broken.ndjson"
    rec.write_text(json.dumps({"schema": "run-record", "version": "1.0", "type": "header"}) + "\n")
    assert main(["eval", str(rec)]) == 3


def test_config_round_trip():
    cfg = RunConfig(seed=3, tc_over_ts=[1.0, 5.0])
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_live_mode_streams_every_message():
    sc = make_scenario("setup-1", "parallel", 1, seed=0, duration=3.0)
    msgs = simulate_sensors(sc)
    poses = {s.id: sc.gt_pose(s.id) for s in sc.sensors}
    stats = asyncio.run(run_live(msgs, poses, FcParams(), sc.duration, time_scale=10.0))
    assert stats.sent == stats.received == len(msgs)
    assert stats.decode_errors == 0
    assert len(stats.snapshots) == int(round(3.0 * 15))
