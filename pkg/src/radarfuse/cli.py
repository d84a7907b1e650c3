"""Command-line entry point.

    radarfuse gen-scenario --setup setup-1 --kind parallel --n-targets 2 --out sc.json
    radarfuse run --config run.json --out results/
    radarfuse sweep-rate --config run.json --seed 0 --seed 1 --out sweep/
    radarfuse selfcal results/messages.ndjson --out calib.json
    radarfuse eval results/run.ndjson --out report.json

Exit codes: 0 success, 2 configuration error, 3 runtime failure. Failures
print a one-line JSON error report on stderr (and to ``error.json`` when an
output directory is known).
"""
from __future__ import annotations

import argparse
import asyncio
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import serialize as ser
from .evaluation import calib_errors, score_record
from .experiments import RATIOS
from .fusion import FcParams
from .presets import SETUPS, calibration_scenario, make_scenario, occlusion_scenario
from .selfcal import CalibParams, calibrate_network, trajectories_from_messages
from .sim import (KINDS, InvalidScenario, RunRecord, Scenario, SensorModel, gt_frames, run_scenario,
                  scenario_paths, simulate_sensors)

log = logging.getLogger("radarfuse")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
PRESETS = ("occlusion", "calibration")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a run or sweep needs; stored as a ``run-config`` JSON document.

    ``scenario`` is a path to a scenario file or an inline preset spec such as
    ``{"preset": "occlusion"}`` or ``{"setup": "setup-1", "kind": "free",
    "n_targets": 3}``. ``calib`` is ``"gt"``, ``"selfcal"`` or a calibration
    file path. ``model`` overrides sensor-model fields, ``fc`` overrides FC
    parameters; ``fc.T_c`` is ignored when ``tc_over_ts`` is given.
    """

    scenario: str | dict = field(default_factory=lambda: {"preset": "occlusion"})
    seed: int = 0
    calib: str = "gt"
    model: dict = field(default_factory=dict)
    fc: dict = field(default_factory=dict)
    calib_params: dict = field(default_factory=dict)
    tc_over_ts: list[float] = field(default_factory=lambda: [1.0])
    warmup: float = 0.0
    out: str = "out"

    def __post_init__(self):
        if not self.tc_over_ts or any(r <= 0 for r in self.tc_over_ts):
            raise ConfigError("tc_over_ts must be a non-empty list of positive ratios")
        if self.calib not in ("gt", "selfcal") and not Path(self.calib).is_file():
            raise ConfigError(f"calibration file {self.calib!r} not found")
        if isinstance(self.scenario, str) and not Path(self.scenario).is_file():
            raise ConfigError(f"scenario file {self.scenario!r} not found")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        ser.check_header(d, "run-config")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known - {"schema", "version"}
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return {"schema": "run-config", "version": ser.VERSION, **dataclasses.asdict(self)}


# --- building blocks --------------------------------------------------------------------


def build_scenario(spec, seed: int, model_overrides: dict | None = None) -> Scenario:
    if isinstance(spec, str):
        sc = ser.load_scenario(spec)
        sc.seed = seed
    elif isinstance(spec, dict):
        preset = spec.get("preset")
        dur = float(spec.get("duration", 40.0))
        if preset == "occlusion":
            sc = occlusion_scenario(seed, dur)
        elif preset == "calibration":
            sc = calibration_scenario(seed, dur, spec.get("setup", "setup-2"))
        elif preset is None:
            sc = make_scenario(spec.get("setup", "setup-1"), spec.get("kind", "free"), int(spec.get("n_targets", 3)),
                               seed, dur, spec.get("n_sensors"))
        else:
            raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")
    else:
        raise ConfigError("scenario must be a file path or a preset mapping")
    if model_overrides:
        sc.model = SensorModel(**{**dataclasses.asdict(sc.model), **model_overrides})
    return sc


def _fc_params(cfg: RunConfig, sc: Scenario, ratio: float) -> FcParams:
    fc = {k: v for k, v in cfg.fc.items() if k != "T_c"}
    return FcParams(T_c=ratio * sc.sensors[0].T_s, **fc)


def _calib_arg(cfg: RunConfig):
    if cfg.calib in ("gt", "selfcal"):
        return cfg.calib
    return ser.load_calibration(cfg.calib)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _report(rec, warmup: float) -> dict:
    mot = score_record(rec, warmup=warmup)
    cal = None
    if rec.calib_source == "selfcal":
        cal = calib_errors(rec.calib.poses(), {s.id: rec.scenario.gt_pose(s.id) for s in rec.scenario.sensors})
    extra = {"scenario": rec.scenario.name, "seed": rec.scenario.seed, "calib_source": rec.calib_source,
             "T_c": rec.fc_params.T_c, "errors": rec.errors}
    return ser.report_to_dict(mot, cal, extra)


# --- commands ---------------------------------------------------------------------------


def cmd_gen_scenario(args) -> int:
    if args.preset:
        spec = {"preset": args.preset, "duration": args.duration}
        if args.setup:
            spec["setup"] = args.setup
    else:
        spec = {"setup": args.setup or "setup-1", "kind": args.kind, "n_targets": args.n_targets,
                "duration": args.duration}
    sc = build_scenario(spec, args.seed)
    scenario_paths(sc)  # raises InvalidScenario if a path leaves the room
    out = Path(args.out or "scenario.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    ser.save_scenario(out, sc)
    print(out)
    return EXIT_OK


def _load_config(args) -> RunConfig:
    try:
        return _config_from_args(args)
    except (ValueError, TypeError, KeyError) as e:
        if isinstance(e, (ConfigError, ser.SchemaError)):
            raise
        raise ConfigError(f"bad configuration: {e}") from None


def _prepare(cfg: RunConfig, seed: int):
    """Scenario and calibration parameters for one seed; any failure here is a config error."""
    try:
        sc = build_scenario(cfg.scenario, seed, cfg.model)
        cp = CalibParams(T_c=sc.sensors[0].T_s, **cfg.calib_params)
        for r in cfg.tc_over_ts:
            _fc_params(cfg, sc, r)
        return sc, cp
    except (ConfigError, ser.SchemaError, InvalidScenario):
        raise
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"bad configuration: {e}") from None


def _config_from_args(args) -> RunConfig:
    d = ser.read_json(args.config) if args.config else {"schema": "run-config", "version": ser.VERSION}
    if getattr(args, "scenario", None):
        d["scenario"] = args.scenario
    if args.seed is not None:
        d["seed"] = args.seed[0] if isinstance(args.seed, list) else args.seed
    if getattr(args, "calib", None):
        d["calib"] = args.calib
    if getattr(args, "tc_over_ts", None):
        d["tc_over_ts"] = args.tc_over_ts
    if args.out:
        d["out"] = args.out
    return RunConfig.from_dict(d)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    sc, cp = _prepare(cfg, cfg.seed)
    out = _out_dir(cfg.out)
    fc = _fc_params(cfg, sc, cfg.tc_over_ts[0])
    if args.live:
        return _run_live(cfg, sc, fc, cp, out, args.time_scale)
    rec = run_scenario(sc, fc, calib=_calib_arg(cfg), calib_params=cp)
    ser.save_run_record(out / "run.ndjson", rec)
    ser.save_messages(out / "messages.ndjson", rec.messages, {"scenario": ser.scenario_to_dict(sc)})
    if rec.calib is not None and rec.calib_source == "selfcal":
        ser.save_calibration(out / "calibration.json", rec.calib)
    ser.write_json(out / "report.json", _report(rec, cfg.warmup))
    ser.write_json(out / "config.json", cfg.to_dict())
    print(out / "report.json")
    return EXIT_OK


def _run_live(cfg, sc, fc, cp, out: Path, time_scale: float) -> int:
    from .live import run_live

    msgs = simulate_sensors(sc)
    if cfg.calib == "gt":
        poses = {s.id: sc.gt_pose(s.id) for s in sc.sensors}
    elif cfg.calib == "selfcal":
        trajs = trajectories_from_messages(msgs)
        for s in sc.sensors:
            trajs.setdefault(s.id, [])
        poses = calibrate_network(trajs, cp).poses()
    else:
        poses = ser.load_calibration(cfg.calib).poses()
    stats = asyncio.run(run_live(msgs, poses, fc, sc.duration, time_scale))
    rec = RunRecord(sc, fc, "live", sorted(poses), msgs, stats.snapshots,
                    gt_frames(sc, [s.tau for s in stats.snapshots], sorted(poses)))
    rep = _report(rec, cfg.warmup)
    rep["live"] = {"sent": stats.sent, "received": stats.received, "late_slots": stats.late,
                   "decode_errors": stats.decode_errors, "time_scale": time_scale}
    ser.write_json(out / "report.json", rep)
    print(out / "report.json")
    return EXIT_OK


def cmd_sweep_rate(args) -> int:
    cfg = _load_config(args)
    if not args.tc_over_ts and cfg.tc_over_ts == [1.0]:
        cfg.tc_over_ts = list(RATIOS)
    seeds = args.seed or [cfg.seed]
    out = _out_dir(cfg.out)
    rows = []
    for seed in seeds:
        sc, cp = _prepare(cfg, seed)
        msgs = simulate_sensors(sc)
        calib = _calib_arg(cfg)
        for r in cfg.tc_over_ts:
            rec = run_scenario(sc, _fc_params(cfg, sc, r), calib=calib, calib_params=cp, messages=msgs)
            mot = score_record(rec, warmup=cfg.warmup)
            rows.append({"seed": seed, "tc_over_ts": r, "MOTA": mot.MOTA, "MOTP": mot.MOTP, "misses": mot.misses,
                         "false_positives": mot.false_positives, "switches": mot.switches, "n_gt": mot.n_gt})
    path = out / "sweep.csv"
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else ("" if v is None else v) for k, v in row.items()})
    print(path)
    return EXIT_OK


def _read_log(path):
    """Messages and (when recorded) the scenario, from a message log or a run record."""
    head = ser.read_json_line(path)
    if head.get("schema") == "run-record":
        rec = ser.load_run_record(path)
        return rec.messages, rec.scenario
    head, msgs = ser.load_messages(path)
    sc = ser.scenario_from_dict(head["scenario"]) if "scenario" in head else None
    return msgs, sc


def cmd_selfcal(args) -> int:
    msgs, sc = _read_log(args.log)
    T_s = sc.sensors[0].T_s if sc else 1.0 / 15.0
    cp = CalibParams(T_c=T_s)
    if args.config:
        cp = CalibParams(T_c=T_s, **RunConfig.from_dict(ser.read_json(args.config)).calib_params)
    trajs = trajectories_from_messages(msgs)
    if sc is not None:
        for s in sc.sensors:
            trajs.setdefault(s.id, [])
    res = calibrate_network(trajs, cp)
    out = Path(args.out or "calibration.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    ser.save_calibration(out, res)
    if sc is not None:
        rep = calib_errors(res.poses(), {s.id: sc.gt_pose(s.id) for s in sc.sensors})
        ser.write_json(out.with_name(out.stem + "_report.json"), ser.report_to_dict(None, rep))
    print(out)
    return EXIT_OK


def cmd_eval(args) -> int:
    rec = ser.load_run_record(args.record)
    warmup = 0.0
    if args.config:
        warmup = RunConfig.from_dict(ser.read_json(args.config)).warmup
    rep = _report(rec, warmup)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        ser.write_json(args.out, rep)
        print(args.out)
    else:
        print(json.dumps(rep, indent=1))
    return EXIT_OK


# --- parser -----------------------------------------------------------------------------


def _ratios(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="radarfuse", description="Radar self-calibration and slotted track fusion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-scenario", help="write a preset scenario file")
    g.add_argument("--setup", choices=sorted(SETUPS))
    g.add_argument("--kind", choices=KINDS, default="free")
    g.add_argument("--n-targets", type=int, default=3)
    g.add_argument("--preset", choices=PRESETS)
    g.add_argument("--duration", type=float, default=40.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_scenario)

    r = sub.add_parser("run", help="simulate, calibrate, fuse and score one scenario")
    r.add_argument("--config")
    r.add_argument("--scenario", help="scenario file (overrides the config)")
    r.add_argument("--seed", type=int)
    r.add_argument("--calib", help="gt, selfcal or a calibration file")
    r.add_argument("--tc-over-ts", type=_ratios, help="slot duration as a multiple of T_s")
    r.add_argument("--out")
    r.add_argument("--live", action="store_true", help="concurrent soak mode over localhost TCP")
    r.add_argument("--time-scale", type=float, default=1.0, help="live mode speed-up factor")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-rate", help="replay one sensor log at several T_c/T_s ratios")
    s.add_argument("--config")
    s.add_argument("--scenario")
    s.add_argument("--seed", type=int, action="append", help="repeat for several seeds")
    s.add_argument("--calib")
    s.add_argument("--tc-over-ts", type=_ratios, help="comma-separated ratios")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep_rate)

    c = sub.add_parser("selfcal", help="calibrate sensors from a message log or run record")
    c.add_argument("log")
    c.add_argument("--config")
    c.add_argument("--out")
    c.set_defaults(func=cmd_selfcal)

    e = sub.add_parser("eval", help="score a run record")
    e.add_argument("record")
    e.add_argument("--config")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return p


def _fail(code: int, kind: str, err: BaseException, out: str | None) -> int:
    doc = {"error": kind, "type": type(err).__name__, "message": str(err)}
    print(json.dumps(doc), file=sys.stderr)
    if out and Path(out).is_dir():
        ser.write_json(Path(out) / "error.json", doc)
    return code


def main(argv=None) -> int:
    out = None
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                            format="%(levelname)s %(name)s: %(message)s")
        out = getattr(args, "out", None)
        return args.func(args)
    except (ConfigError, ser.SchemaError, InvalidScenario, FileNotFoundError) as e:
        return _fail(EXIT_CONFIG, "config", e, out)
    except Exception as e:  # noqa: BLE001 - structured report for any runtime failure
        return _fail(EXIT_RUNTIME, "runtime", e, out)


if __name__ == "__main__":
    sys.exit(main())
