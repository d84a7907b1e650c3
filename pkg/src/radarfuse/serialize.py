"""File and wire encodings.

Documents (scenarios, configs, reports, calibrations) are single JSON
objects; message logs and run records are newline-delimited JSON with one
record per line. Every file carries ``schema`` and ``version``; loaders
reject unknown major versions. Floats are written with Python's shortest
round-trip repr, so load(save(x)) reproduces every value bit for bit.
"""
from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .evaluation import CalibReport, MotReport, SensorCalibError
from .fusion import FcParams, Snapshot
from .geom import Pose2D
from .selfcal import CalibResult, SensorCalib
from .sim import GtFrame, RunRecord, Scenario, SensorModel, SensorSpec, TargetSpec
from .track import TrackSetMsg

VERSION = "1.0"
MAJOR = 1


class SchemaError(ValueError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=True)


def _header(schema: str) -> dict:
    return {"schema": schema, "version": VERSION}


def check_header(doc: dict, schema: str) -> None:
    if not isinstance(doc, dict) or "version" not in doc or "schema" not in doc:
        raise SchemaError("missing schema/version header")
    if doc["schema"] != schema:
        raise SchemaError(f"expected schema {schema!r}, got {doc['schema']!r}")
    try:
        major = int(str(doc["version"]).split(".")[0])
    except ValueError:
        raise SchemaError(f"malformed version {doc['version']!r}") from None
    if major != MAJOR:
        raise SchemaError(f"unsupported {schema} major version {major} (expected {MAJOR})")


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


# --- elementary types -----------------------------------------------------------


def pose_to_dict(p: Pose2D | None):
    return None if p is None else {"t": _arr(p.t), "R": _arr(p.R)}


def pose_from_dict(d) -> Pose2D | None:
    return None if d is None else Pose2D(t=np.array(d["t"], dtype=float), R=np.array(d["R"], dtype=float))


def _tracks_to_list(tracks):
    return [{"id": int(i), "x": _arr(x), "C": _arr(C)} for i, x, C in tracks]


def _tracks_from_list(lst):
    return [(int(d["id"]), np.array(d["x"], dtype=float), np.array(d["C"], dtype=float)) for d in lst]


def msg_to_dict(m: TrackSetMsg) -> dict:
    return {"sensor_id": int(m.sensor_id), "timestamp": float(m.timestamp),
            "arrival": None if m.arrival is None else float(m.arrival), "tracks": _tracks_to_list(m.tracks)}


def msg_from_dict(d: dict) -> TrackSetMsg:
    return TrackSetMsg(int(d["sensor_id"]), float(d["timestamp"]), _tracks_from_list(d["tracks"]),
                       None if d.get("arrival") is None else float(d["arrival"]))


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        **_header("scenario"),
        "name": sc.name,
        "room": list(sc.room),
        "duration": float(sc.duration),
        "seed": int(sc.seed),
        "model": {**dataclasses.asdict(sc.model), "delay": list(sc.model.delay)},
        "sensors": [{"id": s.id, "pose": pose_to_dict(s.pose), "fov_deg": s.fov_deg, "max_range": s.max_range,
                     "T_s": s.T_s} for s in sc.sensors],
        "targets": [{"kind": t.kind, "params": _jsonable(t.params)} for t in sc.targets],
    }


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def scenario_from_dict(d: dict) -> Scenario:
    check_header(d, "scenario")
    try:
        model = SensorModel(**{**d.get("model", {}), "delay": tuple(d.get("model", {}).get("delay", (0.002, 0.02)))})
        sensors = [SensorSpec(int(s["id"]), pose_from_dict(s["pose"]), float(s.get("fov_deg", 60.0)),
                              float(s.get("max_range", 8.0)), float(s.get("T_s", 1.0 / 15.0))) for s in d["sensors"]]
        targets = [TargetSpec(t["kind"], dict(t.get("params", {}))) for t in d.get("targets", [])]
        return Scenario(sensors, targets, tuple(d.get("room", (7.0, 4.0))), float(d["duration"]),
                        int(d.get("seed", 0)), model, d.get("name", ""))
    except (KeyError, TypeError) as e:
        raise SchemaError(f"malformed scenario: {e}") from None


def fc_params_to_dict(p: FcParams) -> dict:
    return dataclasses.asdict(p)


def fc_params_from_dict(d: dict) -> FcParams:
    return FcParams(**d)


def calib_to_dict(c: CalibResult) -> dict:
    return {
        **_header("calibration"),
        "ref_id": c.ref_id,
        "sensors": [{"sensor_id": s.sensor_id, "pose": pose_to_dict(s.pose), "n_pairs": s.n_pairs,
                     "n_selected": s.n_selected, "pairs": s.pairs, "error": s.error}
                    for _, s in sorted(c.sensors.items())],
    }


def calib_from_dict(d: dict) -> CalibResult:
    check_header(d, "calibration")
    sensors = {int(s["sensor_id"]): SensorCalib(int(s["sensor_id"]), pose_from_dict(s["pose"]), int(s["n_pairs"]),
                                                int(s["n_selected"]), list(s["pairs"]), s["error"])
               for s in d["sensors"]}
    return CalibResult(sensors, int(d["ref_id"]))


def mot_to_dict(r: MotReport) -> dict:
    return dataclasses.asdict(r)


def mot_from_dict(d: dict) -> MotReport:
    return MotReport(**d)


def calib_report_to_dict(r: CalibReport) -> dict:
    return {"sensors": {str(k): dataclasses.asdict(v) for k, v in sorted(r.sensors.items())}, "absent": r.absent}


def calib_report_from_dict(d: dict) -> CalibReport:
    return CalibReport({int(k): SensorCalibError(**v) for k, v in d["sensors"].items()}, list(d["absent"]))


def report_to_dict(mot: MotReport | None, calib: CalibReport | None, extra: dict | None = None) -> dict:
    return {**_header("report"), "mot": None if mot is None else mot_to_dict(mot),
            "calib": None if calib is None else calib_report_to_dict(calib), **(extra or {})}


def report_from_dict(d: dict) -> tuple[MotReport | None, CalibReport | None]:
    check_header(d, "report")
    mot = None if d.get("mot") is None else mot_from_dict(d["mot"])
    cal = None if d.get("calib") is None else calib_report_from_dict(d["calib"])
    return mot, cal


# --- documents --------------------------------------------------------------------


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e})") from None


def save_scenario(path, sc: Scenario) -> None:
    write_json(path, scenario_to_dict(sc))


def load_scenario(path) -> Scenario:
    return scenario_from_dict(read_json(path))


def save_calibration(path, c: CalibResult) -> None:
    write_json(path, calib_to_dict(c))


def load_calibration(path) -> CalibResult:
    return calib_from_dict(read_json(path))


# --- newline-delimited records ------------------------------------------------------


def _write_lines(path, records) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(dumps(r))
            f.write("\n")


def read_json_line(path) -> dict:
    """First record of a newline-delimited file (its header)."""
    with open(path) as f:
        first = f.readline()
    try:
        return json.loads(first)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: bad header record ({e})") from None


def _read_lines(path, schema: str) -> tuple[dict, list[dict]]:
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    try:
        recs = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: bad record ({e})") from None
    check_header(recs[0], schema)
    return recs[0], recs[1:]


def save_messages(path, msgs: list[TrackSetMsg], meta: dict | None = None) -> None:
    head = {**_header("message-log"), "type": "header", **(meta or {})}
    _write_lines(path, [head] + [{"type": "msg", **msg_to_dict(m)} for m in msgs])


def load_messages(path) -> tuple[dict, list[TrackSetMsg]]:
    head, recs = _read_lines(path, "message-log")
    return head, [msg_from_dict(r) for r in recs if r.get("type") == "msg"]


def run_record_lines(rec: RunRecord):
    yield {**_header("run-record"), "type": "header", "calib_source": rec.calib_source,
           "sensor_ids": list(rec.sensor_ids), "fc_params": fc_params_to_dict(rec.fc_params),
           "scenario": scenario_to_dict(rec.scenario), "errors": list(rec.errors)}
    if rec.calib is not None:
        yield {"type": "calib", **calib_to_dict(rec.calib)}
    for m in rec.messages:
        yield {"type": "msg", **msg_to_dict(m)}
    for s, g in zip(rec.snapshots, rec.gt):
        yield {"type": "snapshot", "tau": float(s.tau), "tracks": _tracks_to_list(s.tracks),
               "gt_tau": float(g.tau), "gt": _arr(g.positions), "visible": [bool(v) for v in g.visible]}


def save_run_record(path, rec: RunRecord) -> None:
    _write_lines(path, run_record_lines(rec))


def load_run_record(path) -> RunRecord:
    head, recs = _read_lines(path, "run-record")
    calib, msgs, snaps, gt = None, [], [], []
    for r in recs:
        kind = r.get("type")
        if kind == "calib":
            calib = calib_from_dict(r)
        elif kind == "msg":
            msgs.append(msg_from_dict(r))
        elif kind == "snapshot":
            snaps.append(Snapshot(float(r["tau"]), _tracks_from_list(r["tracks"])))
            gt.append(GtFrame(float(r["gt_tau"]), np.array(r["gt"], dtype=float).reshape(-1, 2),
                              np.array(r["visible"], dtype=bool)))
        else:
            raise SchemaError(f"unknown record type {kind!r}")
    return RunRecord(scenario_from_dict(head["scenario"]), fc_params_from_dict(head["fc_params"]),
                     head["calib_source"], list(head["sensor_ids"]), msgs, snaps, gt, calib, list(head["errors"]))


# --- stream framing -------------------------------------------------------------------

_LEN = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024


def encode_frame(record: dict) -> bytes:
    """4-byte big-endian length followed by the UTF-8 JSON record."""
    body = dumps(record).encode()
    return _LEN.pack(len(body)) + body


class FrameDecoder:
    """Incremental decoder: feed arbitrary byte chunks, collect whole records."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[dict]:
        self._buf.extend(data)
        out = []
        while len(self._buf) >= _LEN.size:
            (n,) = _LEN.unpack_from(self._buf)
            if n > MAX_FRAME:
                raise SchemaError(f"frame of {n} bytes exceeds limit")
            if len(self._buf) < _LEN.size + n:
                break
            body = bytes(self._buf[_LEN.size:_LEN.size + n])
            del self._buf[:_LEN.size + n]
            out.append(json.loads(body))
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)
