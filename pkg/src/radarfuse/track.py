"""Sensor-local constant-velocity Kalman tracking with m/n track management."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .assign import FORBIDDEN, solve_assignment

H = np.hstack([np.eye(2), np.zeros((2, 2))])


def cv_transition(dt: float) -> np.ndarray:
    if dt < 0:
        raise ValueError(f"negative time step {dt}")
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    return F


def cv_process_noise(dt: float, q: float) -> np.ndarray:
    """White-acceleration process noise for the [x, y, vx, vy] CV state."""
    d3, d2 = dt**3 / 3.0, dt**2 / 2.0
    return q * np.array(
        [
            [d3, 0.0, d2, 0.0],
            [0.0, d3, 0.0, d2],
            [d2, 0.0, dt, 0.0],
            [0.0, d2, 0.0, dt],
        ]
    )


def polar_covariance(pos, sigma_r: float, sigma_theta_deg: float, fov_deg: float = 60.0) -> np.ndarray:
    """Cartesian covariance of a detection at ``pos`` (sensor frame).

    Range noise is ``sigma_r``; cross-range noise is ``sigma_theta * r / cos(az)``,
    with ``|az|`` capped at the FoV edge.
    """
    x, y = float(pos[0]), float(pos[1])
    r = np.hypot(x, y)
    az = np.arctan2(y, x)
    az_c = min(abs(az), np.deg2rad(fov_deg))
    s_cross = np.deg2rad(sigma_theta_deg) * r / np.cos(az_c)
    c, s = np.cos(az), np.sin(az)
    Rm = np.array([[c, -s], [s, c]])
    return Rm @ np.diag([sigma_r**2, s_cross**2]) @ Rm.T


@dataclass
class KFParams:
    q: float = 0.5  # process-noise intensity, m^2/s^3
    sigma_r: float = 0.05
    sigma_theta_deg: float = 2.0
    fov_deg: float = 60.0
    gate_d: float = 0.8
    m_hits: int = 3
    n_window: int = 5
    init_speed_std: float = 1.0
    eps: float = numerics.EPS
    c_star: float = numerics.C_STAR
    cond_policy: str = "always"

    def stab(self, M: np.ndarray) -> np.ndarray:
        return numerics.stabilize(M, self.eps, self.c_star, self.cond_policy)

    def W(self, dt: float) -> np.ndarray:
        return cv_process_noise(dt, self.q)

    def V(self, z) -> np.ndarray:
        return polar_covariance(z, self.sigma_r, self.sigma_theta_deg, self.fov_deg)


@dataclass
class SensorTrack:
    id: int
    x: np.ndarray
    C: np.ndarray
    last_update: float
    hits: list[bool] = field(default_factory=list)
    confirmed: bool = False
    misses_in_row: int = 0


@dataclass
class TrackSetMsg:
    sensor_id: int
    timestamp: float
    tracks: list[tuple[int, np.ndarray, np.ndarray]]
    arrival: float | None = None

    def __eq__(self, other):
        if not isinstance(other, TrackSetMsg):
            return NotImplemented
        if (self.sensor_id, self.timestamp, self.arrival, len(self.tracks)) != (
            other.sensor_id, other.timestamp, other.arrival, len(other.tracks)
        ):
            return False
        return all(
            a[0] == b[0] and np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])
            for a, b in zip(self.tracks, other.tracks)
        )


def kf_predict(track: SensorTrack, dt: float, W: np.ndarray, params: KFParams | None = None) -> SensorTrack:
    F = cv_transition(dt)
    C = (params or KFParams()).stab(F @ track.C @ F.T + W)
    return SensorTrack(
        id=track.id, x=F @ track.x, C=C, last_update=track.last_update,
        hits=list(track.hits), confirmed=track.confirmed, misses_in_row=track.misses_in_row,
    )


def kf_update(track: SensorTrack, z, V: np.ndarray, params: KFParams | None = None) -> SensorTrack:
    z = np.asarray(z, dtype=float)
    S = numerics.make_positive_definite(numerics.symmetrize(H @ track.C @ H.T + V))
    K = track.C @ H.T @ np.linalg.inv(S)
    x = track.x + K @ (z - H @ track.x)
    IKH = np.eye(4) - K @ H
    # Joseph form keeps C symmetric PSD under rounding
    C = IKH @ track.C @ IKH.T + K @ V @ K.T
    C = (params or KFParams()).stab(C)
    return SensorTrack(
        id=track.id, x=x, C=C, last_update=track.last_update,
        hits=list(track.hits), confirmed=track.confirmed, misses_in_row=track.misses_in_row,
    )


@dataclass
class SensorTracker:
    """Multi-target tracker owned by one sensor. Single writer."""

    sensor_id: int
    params: KFParams = field(default_factory=KFParams)
    tracks: list[SensorTrack] = field(default_factory=list)
    next_id: int = 1
    last_tau: float | None = None

    def step(self, detections, tau: float) -> TrackSetMsg:
        p = self.params
        if self.last_tau is not None and tau <= self.last_tau:
            raise ValueError(f"non-monotonic timestamp {tau} <= {self.last_tau}")
        dets = [np.asarray(d, dtype=float) for d in detections]

        if self.last_tau is not None:
            dt = tau - self.last_tau
            W = p.W(dt)
            self.tracks = [kf_predict(t, dt, W, p) for t in self.tracks]

        pairs = []
        if self.tracks and dets:
            cost = np.array([[np.linalg.norm(t.x[:2] - d) for d in dets] for t in self.tracks])
            cost[cost > p.gate_d] = FORBIDDEN
            pairs = solve_assignment(cost)
        matched_t = {r: c for r, c in pairs}
        matched_d = {c for _, c in pairs}

        survivors = []
        for i, t in enumerate(self.tracks):
            if i in matched_t:
                z = dets[matched_t[i]]
                t = kf_update(t, z, p.V(z), p)
                t.last_update = tau
                t.hits.append(True)
                t.misses_in_row = 0
            else:
                t.hits.append(False)
                t.misses_in_row += 1
            t.hits = t.hits[-p.n_window:]
            if t.misses_in_row >= p.n_window - p.m_hits + 1:
                continue
            if not t.confirmed and len(t.hits) >= p.n_window and sum(t.hits) < p.m_hits:
                continue
            if sum(t.hits) >= p.m_hits:
                t.confirmed = True
            survivors.append(t)

        for j, z in enumerate(dets):
            if j in matched_d:
                continue
            C0 = np.zeros((4, 4))
            C0[:2, :2] = p.V(z)
            C0[2:, 2:] = np.eye(2) * p.init_speed_std**2
            t = SensorTrack(
                id=self.next_id, x=np.array([z[0], z[1], 0.0, 0.0]),
                C=p.stab(C0), last_update=tau, hits=[True],
            )
            self.next_id += 1
            if p.m_hits <= 1:
                t.confirmed = True
            survivors.append(t)

        self.tracks = survivors
        self.last_tau = tau
        out = [(t.id, t.x.copy(), t.C.copy()) for t in self.tracks if t.confirmed]
        return TrackSetMsg(sensor_id=self.sensor_id, timestamp=tau, tracks=out)


def step_sensor_tracker(state: SensorTracker, detections, tau: float, params: KFParams | None = None):
    if params is not None:
        state.params = params
    msg = state.step(detections, tau)
    return state, msg
