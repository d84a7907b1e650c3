"""Slotted track-to-track fusion center.

Each slot the FC keeps the freshest track set per sensor, moves those tracks
into its own frame and time, predicts its central tracks, associates
sensor-to-center (with information decorrelation for recently fused pairs),
fuses, then groups the leftovers sensor-to-sensor to start new tracks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .assign import FORBIDDEN, solve_assignment
from .geom import Pose2D, augment_pose
from .track import TrackSetMsg, cv_process_noise, cv_transition

log = logging.getLogger(__name__)


class FutureTimestampError(ValueError):
    pass


@dataclass
class FcParams:
    T_c: float = 1.0 / 15.0
    A_th: float = 18.0
    T_th: float | None = None  # defaults to 1.3 * T_c
    m_hits: int = 3
    n_window: int = 5
    tau0: float = 0.0
    q: float = 0.5
    eps: float = numerics.EPS
    c_star: float = numerics.C_STAR
    cond_policy: str = "on-repair"

    def __post_init__(self):
        if self.cond_policy not in numerics.POLICIES:
            raise ValueError(f"unknown cond_policy {self.cond_policy!r}")
        if self.T_c <= 0:
            raise ValueError("T_c must be positive")
        if self.T_th is None:
            self.T_th = 1.3 * self.T_c
        if self.T_th <= 0:
            raise ValueError("T_th must be positive")

    def W(self, dt: float) -> np.ndarray:
        return cv_process_noise(dt, self.q)

    def stab(self, M: np.ndarray) -> np.ndarray:
        return numerics.stabilize(M, self.eps, self.c_star, self.cond_policy)

    def stab_out(self, M: np.ndarray) -> np.ndarray:
        """Full hygiene for reported covariances: PD and ``cond <= c_star``."""
        return numerics.stabilize(M, self.eps, self.c_star, "always")


@dataclass
class CacheEntry:
    """What one sensor track last contributed to a central track.

    ``x``/``C`` are the sensor estimate in the FC frame, valid at ``stamp``
    (the sensor timestamp; defaults to ``fused_at``, the slot time of the fusion).
    """

    sensor_track_id: int
    x: np.ndarray
    C: np.ndarray
    fused_at: float
    stamp: float | None = None

    @property
    def valid_at(self) -> float:
        return self.fused_at if self.stamp is None else self.stamp


@dataclass
class CentralTrack:
    id: int
    x: np.ndarray
    C: np.ndarray
    hits: list[bool] = field(default_factory=list)
    confirmed: bool = False
    cache: dict[int, CacheEntry] = field(default_factory=dict)


@dataclass
class LocalTrack:
    """A sensor track already expressed in the FC frame at the slot time."""

    sensor_id: int
    track_id: int
    x: np.ndarray
    C: np.ndarray
    stamp: float | None = None
    x_stamp: np.ndarray | None = None  # same estimate, FC frame, at the sensor timestamp
    C_stamp: np.ndarray | None = None

    def cache_entry(self, now: float) -> "CacheEntry":
        if self.x_stamp is None:
            return CacheEntry(self.track_id, self.x.copy(), self.C.copy(), now)
        return CacheEntry(self.track_id, self.x_stamp.copy(), self.C_stamp.copy(), now, self.stamp)


@dataclass
class Snapshot:
    tau: float
    tracks: list[tuple[int, np.ndarray, np.ndarray]]


# --- elementary operations -------------------------------------------------


def received_at(msg: TrackSetMsg) -> float:
    """Reception time at the FC; the sensor timestamp stands in when unknown."""
    return msg.timestamp if msg.arrival is None else msg.arrival


def slot_select(buffer, tau_m: float, tau_prev: float | None = None) -> dict[int, TrackSetMsg]:
    """Freshest track set per sensor (argmin |tau_m - tau_s|) among those received in the slot.

    Future-stamped messages (``tau_s > tau_m``) are never selected. ``tau_prev``
    optionally also discards messages stamped before the slot opened.
    """
    best: dict[int, TrackSetMsg] = {}
    for msg in buffer:
        if msg.timestamp > tau_m:
            log.warning("future-stamped message from sensor %d (%.3f > %.3f) rejected", msg.sensor_id, msg.timestamp, tau_m)
            continue
        if tau_prev is not None and msg.timestamp <= tau_prev:
            continue
        cur = best.get(msg.sensor_id)
        if cur is None or abs(tau_m - msg.timestamp) < abs(tau_m - cur.timestamp):
            best[msg.sensor_id] = msg
    return best


def convert_track(x, C, pose: Pose2D, tau_c: float, tau_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotate/translate a sensor state into the FC frame and propagate it to ``tau_c``."""
    if tau_s > tau_c:
        raise FutureTimestampError(f"track time {tau_s} is after slot time {tau_c}")
    Rb, tb = augment_pose(pose)
    F = cv_transition(tau_c - tau_s)
    FR = F @ Rb
    return F @ (Rb @ np.asarray(x, dtype=float) + tb), numerics.symmetrize(FR @ C @ FR.T)


def predict_central(tracks: list[CentralTrack], T_c: float, W: np.ndarray, params: FcParams | None = None):
    F = cv_transition(T_c)
    stab = (params or FcParams()).stab
    for t in tracks:
        t.x = F @ t.x
        t.C = stab(F @ t.C @ F.T + W)
    return tracks


def mahalanobis(xi, Ci, xj, Cj) -> float:
    d = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
    S = numerics.make_positive_definite(numerics.symmetrize(Ci + Cj))
    return float(max(0.0, d @ np.linalg.solve(S, d)))


def decorrelate(x, C, xbar, Cbar, params: FcParams | None = None):
    """Remove previously communicated information: (x - xbar, (C^-1 - Cbar^-1)^-1)."""
    params = params or FcParams()
    Pdiff = numerics.spd_inv(C) - numerics.spd_inv(Cbar)
    Pdiff = numerics.symmetrize(Pdiff)
    if numerics.eigvalsh(Pdiff)[0] <= 0:
        log.debug("decorrelated precision not PD, stabilizing")
    Pdiff = params.stab(Pdiff)
    return np.asarray(x) - np.asarray(xbar), params.stab(numerics.spd_inv(Pdiff))


def fuse_ss(xa, Ca, xb, Cb, params: FcParams | None = None):
    """Precision-weighted combination of two independent estimates."""
    params = params or FcParams()
    xa, xb = np.asarray(xa, dtype=float), np.asarray(xb, dtype=float)
    Pa, Pb = numerics.spd_inv(Ca), numerics.spd_inv(Cb)
    C = numerics.spd_inv(params.stab(numerics.symmetrize(Pa + Pb)))
    # C (Pa xa + Pb xb) written around xa: identical when C = (Pa + Pb)^-1, and
    # still an affine combination of the inputs when stabilization altered C
    x = xa + C @ (Pb @ (xb - xa))
    return x, params.stab(C)


def propagate_cache(entry: CacheEntry, now: float, params: FcParams) -> tuple[np.ndarray, np.ndarray]:
    """Predict a cached sensor estimate to ``now`` with the central motion model.

    Process noise is included, so the cached estimate is never more certain than
    the same sensor track extrapolated to ``now``; that keeps the decorrelated
    precision ``P_s - P_bar`` close to positive semidefinite.
    """
    dt = now - entry.valid_at
    if dt <= 0:
        return entry.x, entry.C
    F = cv_transition(dt)
    return F @ entry.x, numerics.symmetrize(F @ entry.C @ F.T + params.W(dt))


def _recent(entry: CacheEntry | None, track_id: int, now: float, params: FcParams) -> bool:
    return entry is not None and entry.sensor_track_id == track_id and now - entry.fused_at <= params.T_th


def fuse_sc(ct: CentralTrack, st: LocalTrack, entry: CacheEntry | None, now: float, params: FcParams):
    """Fuse a sensor track into a (predicted) central track.

    Recently fused pairs use information decorrelation, subtracting what the
    same sensor track contributed last time; otherwise plain precision fusion.
    """
    if not _recent(entry, st.track_id, now, params):
        return fuse_ss(ct.x, ct.C, st.x, st.C, params)
    xbar, Cbar = propagate_cache(entry, now, params)
    Pc, Ps, Pbar = numerics.spd_inv(ct.C), numerics.spd_inv(st.C), numerics.spd_inv(Cbar)
    Pnew = numerics.symmetrize(Pc + Ps - Pbar)
    if numerics.eigvalsh(Pnew)[0] <= 0:
        log.debug("decorrelated fusion precision not PD, stabilizing")
    C = numerics.spd_inv(params.stab(Pnew))
    # C (Pc xc + Ps xs - Pbar xbar), expanded around xc for the same reason as fuse_ss
    x = ct.x + C @ (Ps @ (st.x - ct.x) - Pbar @ (xbar - ct.x))
    return x, params.stab(C)


def sc_cost(ct: CentralTrack, st: LocalTrack, now: float, params: FcParams) -> float:
    entry = ct.cache.get(st.sensor_id)
    if not _recent(entry, st.track_id, now, params):
        return mahalanobis(ct.x, ct.C, st.x, st.C)
    xbar, Cbar = propagate_cache(entry, now, params)
    xi, Ci = decorrelate(ct.x, ct.C, xbar, Cbar, params)
    xj, Cj = decorrelate(st.x, st.C, xbar, Cbar, params)
    return mahalanobis(xi, Ci, xj, Cj)


def associate_sc(central: list[CentralTrack], sensor: list[LocalTrack], now: float, params: FcParams):
    """Sensor-to-center association for the tracks of one sensor.

    Returns ``(pairs, leftover_central, leftover_sensor)`` with pairs as
    ``(central_index, sensor_index)``.
    """
    pairs: list[tuple[int, int]] = []
    used_c, used_s = set(), set()
    by_id = {st.track_id: j for j, st in enumerate(sensor)}
    # stage 1: previous associations still within the gate
    for i, ct in enumerate(central):
        for sid, entry in ct.cache.items():
            if not sensor or sid != sensor[0].sensor_id:
                continue
            j = by_id.get(entry.sensor_track_id)
            if j is None or j in used_s:
                continue
            if mahalanobis(ct.x, ct.C, sensor[j].x, sensor[j].C) <= params.A_th:
                pairs.append((i, j))
                used_c.add(i)
                used_s.add(j)
    # stage 2: remaining tracks by min total cost
    rc = [i for i in range(len(central)) if i not in used_c]
    rs = [j for j in range(len(sensor)) if j not in used_s]
    if rc and rs:
        L = np.array([[sc_cost(central[i], sensor[j], now, params) for j in rs] for i in rc])
        L[L > params.A_th] = FORBIDDEN
        for a, b in solve_assignment(L):
            pairs.append((rc[a], rs[b]))
            used_c.add(rc[a])
            used_s.add(rs[b])
    pairs.sort()
    return (
        pairs,
        [i for i in range(len(central)) if i not in used_c],
        [j for j in range(len(sensor)) if j not in used_s],
    )


def associate_ss(tracks: list[LocalTrack], A_th: float, params: FcParams | None = None) -> list[list[LocalTrack]]:
    """Group sensor tracks from distinct sensors, pairing sensors in ascending id order."""
    params = params or FcParams()
    by_sensor: dict[int, list[LocalTrack]] = {}
    for t in tracks:
        by_sensor.setdefault(t.sensor_id, []).append(t)
    groups: list[list[LocalTrack]] = []
    states: list[tuple[np.ndarray, np.ndarray]] = []
    for sid in sorted(by_sensor):
        new = by_sensor[sid]
        matched = set()
        if groups:
            L = np.array([[mahalanobis(x, C, t.x, t.C) for t in new] for x, C in states])
            L[L > A_th] = FORBIDDEN
            for g, j in solve_assignment(L):
                groups[g].append(new[j])
                states[g] = fuse_ss(*states[g], new[j].x, new[j].C, params)
                matched.add(j)
        for j, t in enumerate(new):
            if j not in matched:
                groups.append([t])
                states.append((t.x, t.C))
    return groups


def fuse_group(group: list[LocalTrack], params: FcParams):
    group = sorted(group, key=lambda t: t.sensor_id)
    x, C = group[0].x, params.stab(group[0].C)
    for t in group[1:]:
        x, C = fuse_ss(x, C, t.x, t.C, params)
    return x, C


# --- the fusion center ------------------------------------------------------


@dataclass
class FusionCenter:
    """Single-consumer slot loop; owns the central track set."""

    poses: dict[int, Pose2D]
    params: FcParams = field(default_factory=FcParams)
    tracks: list[CentralTrack] = field(default_factory=list)
    next_id: int = 1
    m: int = 0
    buffer: list[TrackSetMsg] = field(default_factory=list)
    dropped: int = 0

    @property
    def tau(self) -> float:
        return self.params.tau0 + self.m * self.params.T_c

    def receive(self, msg: TrackSetMsg) -> None:
        self.buffer.append(msg)

    def _convert(self, msg: TrackSetMsg, tau_m: float) -> list[LocalTrack]:
        pose = self.poses.get(msg.sensor_id)
        if pose is None:
            raise KeyError(f"no pose for sensor {msg.sensor_id}")
        out = []
        for tid, x, C in msg.tracks:
            xc, Cc = convert_track(x, C, pose, tau_m, msg.timestamp)
            x0, C0 = convert_track(x, C, pose, msg.timestamp, msg.timestamp)
            out.append(LocalTrack(msg.sensor_id, int(tid), xc, self.params.stab(Cc), msg.timestamp, x0, C0))
        return out

    def step(self) -> Snapshot:
        """Advance one slot using whatever has been received so far."""
        p = self.params
        tau_prev = self.tau
        self.m += 1
        tau_m = self.tau
        # slot membership is by reception time; selection within the slot by timestamp
        in_slot = [mm for mm in self.buffer if tau_prev < received_at(mm) <= tau_m]
        self.dropped += sum(1 for mm in self.buffer if received_at(mm) <= tau_prev)
        self.buffer = [mm for mm in self.buffer if received_at(mm) > tau_m]
        selected = slot_select(in_slot, tau_m)

        local: dict[int, list[LocalTrack]] = {}
        for sid in sorted(selected):
            try:
                local[sid] = self._convert(selected[sid], tau_m)
            except Exception as e:  # a bad message never aborts the slot
                log.warning("dropping message from sensor %d at %.3f: %s", sid, selected[sid].timestamp, e)

        predict_central(self.tracks, p.T_c, p.W(p.T_c), p)

        hit = [False] * len(self.tracks)
        leftovers: list[LocalTrack] = []
        for sid in sorted(local):
            sts = local[sid]
            pairs, _, rest = associate_sc(self.tracks, sts, tau_m, p)
            for i, j in pairs:
                ct, st = self.tracks[i], sts[j]
                entry = ct.cache.get(sid)
                ct.x, ct.C = fuse_sc(ct, st, entry, tau_m, p)
                ct.cache[sid] = st.cache_entry(tau_m)
                hit[i] = True
            leftovers.extend(sts[j] for j in rest)

        survivors = []
        for ct, h in zip(self.tracks, hit):
            ct.hits = (ct.hits + [h])[-p.n_window:]
            n_hit = sum(ct.hits)
            if n_hit >= p.m_hits:
                ct.confirmed = True
            elif ct.confirmed or len(ct.hits) >= p.n_window:
                continue
            survivors.append(ct)
        self.tracks = survivors

        for group in associate_ss(leftovers, p.A_th, p):
            x, C = fuse_group(group, p)
            ct = CentralTrack(self.next_id, x, C, hits=[True], confirmed=p.m_hits <= 1)
            for st in group:
                ct.cache[st.sensor_id] = st.cache_entry(tau_m)
            self.next_id += 1
            self.tracks.append(ct)

        return Snapshot(tau_m, [(t.id, t.x.copy(), p.stab_out(t.C)) for t in self.tracks if t.confirmed])


def fc_step(fc: FusionCenter, messages=()) -> tuple[FusionCenter, Snapshot]:
    for msg in messages:
        fc.receive(msg)
    snap = fc.step()
    return fc, snap
