"""Deterministic synthetic radar network: targets, sensors, timing, transport.

All randomness derives from the scenario seed through named sub-streams, so
a (scenario, seed) pair fully determines a run.
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from .fusion import FcParams, FusionCenter, Snapshot, received_at
from .geom import Pose2D, apply_pose
from .selfcal import CalibParams, CalibResult, SensorCalib, calibrate_network, trajectories_from_messages
from .track import KFParams, SensorTracker, TrackSetMsg

log = logging.getLogger(__name__)

KINDS = ("in-line", "parallel", "circular", "free", "paral-diag", "vs-in-line")
GT_RATE = 100.0


class InvalidScenario(ValueError):
    pass


def substream(seed: int, *names) -> np.random.Generator:
    """Independent generator for a named purpose, e.g. ``("noise", 2)``."""
    key = [zlib.crc32(str(n).encode()) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


@dataclass
class SensorSpec:
    id: int
    pose: Pose2D  # world frame
    fov_deg: float = 60.0
    max_range: float = 8.0
    T_s: float = 1.0 / 15.0


@dataclass
class SensorModel:
    sigma_r: float = 0.05
    sigma_theta_deg: float = 2.0
    p_d: float = 0.95
    sigma_tau: float = 0.003
    delay: tuple[float, float] = (0.002, 0.020)
    body_radius: float = 0.25

    def __post_init__(self):
        if not 0 < self.p_d <= 1:
            raise InvalidScenario("p_d must be in (0, 1]")
        if min(self.sigma_r, self.sigma_theta_deg, self.sigma_tau, self.body_radius) < 0:
            raise InvalidScenario("noise parameters must be non-negative")
        self.delay = (float(self.delay[0]), float(self.delay[1]))
        if not 0 <= self.delay[0] <= self.delay[1]:
            raise InvalidScenario("delay bounds must satisfy 0 <= lo <= hi")


@dataclass
class TargetSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    sensors: list[SensorSpec]
    targets: list[TargetSpec]
    room: tuple[float, float] = (7.0, 4.0)
    duration: float = 40.0
    seed: int = 0
    model: SensorModel = field(default_factory=SensorModel)
    name: str = ""

    def __post_init__(self):
        self.room = (float(self.room[0]), float(self.room[1]))
        self.validate()

    def validate(self):
        if not self.sensors:
            raise InvalidScenario("at least one sensor required")
        ids = [s.id for s in self.sensors]
        if 1 not in ids:
            raise InvalidScenario("sensor 1 (the reference) is required")
        if len(set(ids)) != len(ids):
            raise InvalidScenario("duplicate sensor ids")
        if self.duration <= 0:
            raise InvalidScenario("duration must be positive")
        for tg in self.targets:
            if tg.kind not in KINDS:
                raise InvalidScenario(f"unknown trajectory kind {tg.kind!r}")

    def sensor(self, sid: int) -> SensorSpec:
        for s in self.sensors:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def gt_pose(self, sid: int) -> Pose2D:
        """Pose of sensor ``sid`` expressed in the reference sensor's frame."""
        return self.sensor(1).pose.inverse().compose(self.sensor(sid).pose)


# --- trajectories ------------------------------------------------------------


@dataclass
class Path:
    t: np.ndarray
    p: np.ndarray

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.t, self.p[:, 0]), np.interp(t, self.t, self.p[:, 1])], axis=-1)


def _inside(p: np.ndarray, room, tol=1e-9) -> bool:
    return bool(np.all(p >= -tol) and np.all(p[..., 0] <= room[0] + tol) and np.all(p[..., 1] <= room[1] + tol))


def _segment(t, a, b, speed, phase):
    a, b = np.asarray(a, float), np.asarray(b, float)
    L = float(np.linalg.norm(b - a))
    if L == 0:
        return np.repeat(a[None], len(t), axis=0)
    s = np.mod(speed * (t + phase), 2 * L)
    s = np.where(s <= L, s, 2 * L - s)  # back and forth
    return a + np.outer(s / L, b - a)


def _circle(t, center, radius, period, phase, direction):
    w = direction * 2 * np.pi / period
    ang = w * t + phase
    return np.asarray(center, float) + radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def _free(t, room, rng, speed, start, margin):
    lo = np.array([margin, margin])
    hi = np.array(room, float) - margin
    pos = np.asarray(start, float) if start is not None else rng.uniform(lo, hi)
    out = np.empty((len(t), 2))
    tk, k = 0.0, 0
    while k < len(t):
        wp = rng.uniform(lo, hi)
        v = rng.uniform(*speed)
        dur = np.linalg.norm(wp - pos) / v
        sel = t[k:] <= tk + dur
        n = int(np.count_nonzero(sel)) if dur > 0 else 0
        if n:
            frac = ((t[k:k + n] - tk) / dur)[:, None]
            out[k:k + n] = pos + frac * (wp - pos)
            k += n
        tk += dur
        pos = wp
    return out


def gen_trajectory(kind: str, params: dict, duration: float, seed: int = 0, room=(7.0, 4.0)) -> Path:
    """Ground-truth path sampled at 100 Hz.

    Line families (in-line, parallel, paral-diag, vs-in-line) walk back and
    forth between ``a`` and ``b``; ``circular`` loops around ``center``;
    ``free`` visits random waypoints.
    """
    if kind not in KINDS:
        raise InvalidScenario(f"unknown trajectory kind {kind!r}")
    t = np.arange(0.0, duration + 1e-9, 1.0 / GT_RATE)
    speed = params.get("speed", 1.0)
    if kind == "circular":
        center = params.get("center", (room[0] / 2, room[1] / 2))
        radius = params.get("radius", 1.0)
        period = params.get("period", 2 * np.pi * radius / speed)
        p = _circle(t, center, radius, period, params.get("phase", 0.0), params.get("direction", 1))
    elif kind == "free":
        rng = substream(seed, "trajectory", params.get("index", 0))
        sp = params.get("speed_range", (0.5, 1.2))
        p = _free(t, room, rng, sp, params.get("start"), params.get("margin", 0.5))
    else:
        if "a" not in params or "b" not in params:
            raise InvalidScenario(f"{kind} needs endpoints a and b")
        p = _segment(t, params["a"], params["b"], speed, params.get("phase", 0.0))
    if not _inside(p, room):
        raise InvalidScenario(f"{kind} trajectory leaves the {room[0]}x{room[1]} m room")
    return Path(t, p)


def scenario_paths(sc: Scenario) -> list[Path]:
    return [gen_trajectory(tg.kind, tg.params, sc.duration, sc.seed, sc.room) for tg in sc.targets]


# --- observation ---------------------------------------------------------------


def in_fov(sensor: SensorSpec, p_world, inv: Pose2D | None = None) -> np.ndarray:
    """Boolean per point: inside the azimuth FoV and the maximum range."""
    loc = apply_pose(inv or sensor.pose.inverse(), np.atleast_2d(p_world))
    r = np.hypot(loc[:, 0], loc[:, 1])
    az = np.degrees(np.arctan2(loc[:, 1], loc[:, 0]))
    return (np.abs(az) <= sensor.fov_deg) & (r <= sensor.max_range) & (r > 0)


def occluded(origin, targets_world: np.ndarray, i: int, radius: float) -> bool:
    """Whether a nearer target's disk cuts the line of sight to target ``i``."""
    o = np.asarray(origin, float)
    p = targets_world[i]
    seg = p - o
    L2 = float(seg @ seg)
    ri = np.sqrt(L2)
    for j, q in enumerate(targets_world):
        if j == i or np.linalg.norm(q - o) >= ri:
            continue
        u = np.clip(((q - o) @ seg) / L2, 0.0, 1.0) if L2 > 0 else 0.0
        if np.linalg.norm(o + u * seg - q) < radius:
            return True
    return False


def observe(sensor: SensorSpec, model: SensorModel, targets_world: np.ndarray, rng: np.random.Generator,
            inv: Pose2D | None = None):
    """Detections (sensor frame) of the targets at one instant.

    Draws exactly three variates per target regardless of visibility so the
    noise stream stays aligned across configurations.
    """
    inv = inv or sensor.pose.inverse()
    dets, ids = [], []
    vis = in_fov(sensor, targets_world, inv) if len(targets_world) else np.zeros(0, bool)
    for i in range(len(targets_world)):
        u, n1, n2 = rng.random(), rng.standard_normal(), rng.standard_normal()
        if not vis[i]:
            continue
        if occluded(sensor.pose.t, targets_world, i, model.body_radius):
            continue
        if u >= model.p_d:
            continue
        loc = apply_pose(inv, targets_world[i])
        r = np.hypot(*loc)
        az = np.arctan2(loc[1], loc[0])
        az_c = min(abs(az), np.deg2rad(sensor.fov_deg))
        s_cross = np.deg2rad(model.sigma_theta_deg) * r / np.cos(az_c)
        c, s = np.cos(az), np.sin(az)
        noise = np.array([c * model.sigma_r * n1 - s * s_cross * n2, s * model.sigma_r * n1 + c * s_cross * n2])
        dets.append(loc + noise)
        ids.append(i)
    return dets, ids


# --- pipeline ---------------------------------------------------------------------


def frame_times(sensor: SensorSpec, model: SensorModel, duration: float, seed: int) -> np.ndarray:
    rng = substream(seed, "timing", sensor.id)
    t0 = rng.uniform(0.0, sensor.T_s)
    n = int(np.floor((duration - t0) / sensor.T_s)) + 1
    jit = np.clip(rng.normal(0.0, model.sigma_tau, n), -sensor.T_s / 4, sensor.T_s / 4) if model.sigma_tau > 0 else np.zeros(n)
    t = t0 + np.arange(n) * sensor.T_s + jit
    return t[(t > 0) & (t <= duration)]


def simulate_sensors(sc: Scenario, kf: KFParams | None = None, paths: list[Path] | None = None) -> list[TrackSetMsg]:
    """Run every sensor's tracker over the scenario; messages sorted by arrival."""
    paths = paths if paths is not None else scenario_paths(sc)
    msgs = []
    for sensor in sorted(sc.sensors, key=lambda s: s.id):
        params = kf or KFParams(sigma_r=sc.model.sigma_r, sigma_theta_deg=sc.model.sigma_theta_deg, fov_deg=sensor.fov_deg)
        tracker = SensorTracker(sensor.id, params)
        noise = substream(sc.seed, "noise", sensor.id)
        transport = substream(sc.seed, "transport", sensor.id)
        inv = sensor.pose.inverse()
        times = frame_times(sensor, sc.model, sc.duration, sc.seed)
        world_all = np.stack([pp.at(times) for pp in paths], axis=1) if paths else np.zeros((len(times), 0, 2))
        for tk, world in zip(times, world_all):
            dets, _ = observe(sensor, sc.model, world, noise, inv)
            msg = tracker.step(dets, float(tk))
            msg.arrival = float(tk + transport.uniform(*sc.model.delay))
            msgs.append(msg)
    msgs.sort(key=lambda m: (m.arrival, m.sensor_id))
    return msgs


def replay_fc(msgs: list[TrackSetMsg], poses: dict[int, Pose2D], fc_params: FcParams, duration: float,
              sensor_ids=None) -> list[Snapshot]:
    """Drive the slot loop in virtual time: slot m sees messages arrived by tau_m."""
    use = [m for m in msgs if sensor_ids is None or m.sensor_id in sensor_ids]
    use.sort(key=lambda m: (received_at(m), m.sensor_id))
    fc = FusionCenter(poses=dict(poses), params=fc_params)
    snaps, k = [], 0
    n_slots = int(np.floor((duration - fc_params.tau0) / fc_params.T_c + 1e-9))
    for m in range(1, n_slots + 1):
        tau_m = fc_params.tau0 + m * fc_params.T_c
        while k < len(use) and received_at(use[k]) <= tau_m:
            fc.receive(use[k])
            k += 1
        snaps.append(fc.step())
    return snaps


@dataclass
class GtFrame:
    tau: float
    positions: np.ndarray  # (n_targets, 2), FC frame
    visible: np.ndarray  # inside at least one used sensor's FoV


def gt_frames(sc: Scenario, taus, sensor_ids=None, paths: list[Path] | None = None) -> list[GtFrame]:
    paths = paths if paths is not None else scenario_paths(sc)
    ids = sensor_ids if sensor_ids is not None else [s.id for s in sc.sensors]
    to_fc = sc.sensor(1).pose.inverse()
    out = []
    for tau in taus:
        world = np.array([pp.at(tau) for pp in paths]).reshape(-1, 2)
        vis = np.zeros(len(world), bool)
        for sid in ids:
            vis |= in_fov(sc.sensor(sid), world) if len(world) else vis
        out.append(GtFrame(float(tau), apply_pose(to_fc, world) if len(world) else world, vis))
    return out


@dataclass
class RunRecord:
    scenario: Scenario
    fc_params: FcParams
    calib_source: str
    sensor_ids: list[int]
    messages: list[TrackSetMsg]
    snapshots: list[Snapshot]
    gt: list[GtFrame]
    calib: CalibResult | None = None
    errors: list[str] = field(default_factory=list)


def gt_calibration(sc: Scenario) -> CalibResult:
    return CalibResult({s.id: SensorCalib(s.id, sc.gt_pose(s.id)) for s in sc.sensors})


def run_scenario(sc: Scenario, fc_params: FcParams | None = None, calib="gt", sensor_ids=None,
                 calib_params: CalibParams | None = None, kf: KFParams | None = None,
                 messages: list[TrackSetMsg] | None = None) -> RunRecord:
    """End-to-end run: sensors -> (self-calibration) -> slotted FC -> ground truth.

    ``calib`` is ``"gt"``, ``"selfcal"`` or a ready :class:`CalibResult`.
    Passing ``messages`` replays a recorded sensor log instead of simulating.
    """
    fc_params = fc_params or FcParams(T_c=sc.sensors[0].T_s)
    paths = scenario_paths(sc)
    errors = []
    msgs = messages if messages is not None else simulate_sensors(sc, kf, paths)
    ids = sorted(sensor_ids) if sensor_ids is not None else sorted(s.id for s in sc.sensors)
    calib_res = None
    if isinstance(calib, CalibResult):
        calib_res, source = calib, "file"
    elif calib == "selfcal":
        cp = calib_params or CalibParams(T_c=sc.sensors[0].T_s)
        trajs = trajectories_from_messages(msgs)
        for s in sc.sensors:
            trajs.setdefault(s.id, [])
        calib_res, source = calibrate_network(trajs, cp), "selfcal"
    elif calib == "gt":
        source = "gt"
    else:
        raise ValueError(f"unknown calibration source {calib!r}")
    if calib_res is None:
        poses = {s.id: sc.gt_pose(s.id) for s in sc.sensors}
    else:
        poses = calib_res.poses()
        for s in ids:
            if s not in poses:
                errors.append(f"sensor {s}: no calibration, messages ignored")
    snaps = replay_fc(msgs, {s: poses[s] for s in ids if s in poses}, fc_params, sc.duration, set(ids))
    gt = gt_frames(sc, [s.tau for s in snaps], ids, paths)
    return RunRecord(sc, fc_params, source, ids, msgs, snaps, gt, calib_res, errors)
