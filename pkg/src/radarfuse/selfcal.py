"""Sensor self-calibration from co-observed target trajectories.

Each non-reference sensor is calibrated against sensor 1 independently:
time-align every trajectory pair, score it, associate by minimum total
cost, mask (exhaustive subset search) and fit one rigid transform on the
stacked winning pairs.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .assign import FORBIDDEN, solve_assignment
from .geom import DegenerateGeometryError, Pose2D, fit_rigid_transform

log = logging.getLogger(__name__)


class CalibrationFailed(RuntimeError):
    def __init__(self, msg: str, diagnostics: dict | None = None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass
class Trajectory:
    sensor_id: int
    track_id: int
    t: np.ndarray  # (K,) seconds, strictly increasing
    p: np.ndarray  # (K, 2) metres

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.p = np.asarray(self.p, dtype=float).reshape(-1, 2)
        if len(self.t) != len(self.p):
            raise ValueError("timestamps and positions differ in length")
        if len(self.t) < 2:
            raise ValueError("a trajectory needs at least 2 points")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("timestamps must be strictly increasing")


@dataclass
class AlignedPair:
    k1: np.ndarray
    ks: np.ndarray
    tau_bar: float

    @property
    def K(self) -> int:
        return len(self.k1)


@dataclass
class CalibParams:
    T_c: float = 1.0 / 15.0
    A_self: float = 18.0
    max_pairs: int = 5
    min_overlap_s: float = 4.0
    masking: bool = True

    def __post_init__(self):
        if self.max_pairs < 1:
            raise ValueError("max_pairs must be >= 1")
        if not np.isfinite(self.A_self):
            raise ValueError("A_self must be finite")


@dataclass
class PairScore:
    a: Trajectory
    b: Trajectory
    A: float
    xi: float
    tau_bar: float
    K: int
    aligned: AlignedPair
    pose: Pose2D | None = None


@dataclass
class SensorCalib:
    sensor_id: int
    pose: Pose2D | None
    n_pairs: int = 0  # pairs surviving association
    n_selected: int = 0  # pairs kept by masking
    pairs: list[dict] = field(default_factory=list)
    error: str | None = None


@dataclass
class CalibResult:
    sensors: dict[int, SensorCalib]
    ref_id: int = 1

    def poses(self) -> dict[int, Pose2D]:
        return {s: c.pose for s, c in self.sensors.items() if c.pose is not None}


def _nearest(src: np.ndarray, ref: np.ndarray, prefer_later: bool) -> np.ndarray:
    """Index into ``ref`` of the nearest element to each ``src`` time."""
    hi = np.searchsorted(ref, src, side="left")
    hi = np.clip(hi, 0, len(ref) - 1)
    lo = np.clip(hi - 1, 0, len(ref) - 1)
    d_lo = np.abs(src - ref[lo])
    d_hi = np.abs(ref[hi] - src)
    tol = 1e-9  # clock values that differ only by rounding count as ties
    pick_hi = d_hi <= d_lo + tol if prefer_later else d_hi < d_lo - tol
    return np.where(pick_hi, hi, lo)


def time_align(a: Trajectory, b: Trajectory, T_c: float) -> AlignedPair:
    """Mutual-nearest timestamp matching within ``T_c``.

    Mutual nearest neighbours on sorted time axes form a strictly monotone
    one-to-one matching. Exact ties pair an ``a`` sample with the later ``b``.
    """
    ta, tb = a.t, b.t
    ab = _nearest(ta, tb, prefer_later=True)
    ba = _nearest(tb, ta, prefer_later=False)
    ia = np.arange(len(ta))
    keep = (ba[ab] == ia) & (np.abs(ta - tb[ab]) <= T_c)
    k1 = ia[keep]
    ks = ab[keep]
    if len(k1) == 0:
        return AlignedPair(k1=k1, ks=ks, tau_bar=np.nan)
    return AlignedPair(k1=k1, ks=ks, tau_bar=float(np.mean(np.abs(ta[k1] - tb[ks]))))


def overlap_factor(K: int, tau_bar: float, T_c: float) -> float:
    """Favour long, well-synchronised overlaps: ln(K T_c) / (1 + tau_bar)."""
    return float(np.log(K * T_c) / (1.0 + tau_bar))


def association_cost(K: int, tau_bar: float, xi: float, T_c: float, min_overlap_s: float = 0.0) -> float:
    if K == 0 or K * T_c < min_overlap_s or K * T_c <= 0:
        return np.inf
    return -overlap_factor(K, tau_bar, T_c) / (1.0 + xi)


def _score(src: np.ndarray, dst: np.ndarray, K: int, tau_bar: float, params: CalibParams):
    if K * params.T_c < params.min_overlap_s or K < 2:
        return np.inf, None, np.inf
    try:
        pose, xi = fit_rigid_transform(src, dst)
    except DegenerateGeometryError:
        return np.inf, None, np.inf
    return association_cost(K, tau_bar, xi, params.T_c, params.min_overlap_s), pose, xi


def pair_cost(a: Trajectory, b: Trajectory, params: CalibParams) -> PairScore:
    """Score the hypothesis that ``a`` (reference sensor) and ``b`` are one target."""
    al = time_align(a, b, params.T_c)
    K = al.K
    if K == 0:
        return PairScore(a, b, np.inf, np.inf, np.nan, 0, al)
    A, pose, xi = _score(b.p[al.ks], a.p[al.k1], K, al.tau_bar, params)
    return PairScore(a, b, A, xi, al.tau_bar, K, al, pose)


def associate_tracks(trajs1: list[Trajectory], trajs_s: list[Trajectory], params: CalibParams) -> list[PairScore]:
    """Min-total-cost trajectory association, thresholded and capped."""
    if not trajs1 or not trajs_s:
        return []
    scores = [[pair_cost(a, b, params) for b in trajs_s] for a in trajs1]
    costs = np.array([[sc.A for sc in row] for row in scores])
    costs[~np.isfinite(costs)] = FORBIDDEN
    Q = [scores[i][j] for i, j in solve_assignment(costs)]
    Q = [q for q in Q if q.A <= params.A_self]
    Q.sort(key=lambda q: q.A)
    return Q[: params.max_pairs]


def stacked_cost(pairs: list[PairScore], params: CalibParams):
    """Cost, pose and residual of one rigid fit over all pairs stacked."""
    src = np.concatenate([q.b.p[q.aligned.ks] for q in pairs])
    dst = np.concatenate([q.a.p[q.aligned.k1] for q in pairs])
    K = sum(q.K for q in pairs)
    tau_bar = sum(q.K * q.tau_bar for q in pairs) / K
    return _score(src, dst, K, tau_bar, params)


def mask_select(Q: list[PairScore], params: CalibParams) -> tuple[list[PairScore], int]:
    """Exhaustive search over non-empty subsets of ``Q`` for the lowest stacked cost.

    Returns the winning subset and the number of subsets evaluated.
    """
    if not Q:
        return [], 0
    best, best_A, n_eval = None, np.inf, 0
    for r in range(1, len(Q) + 1):
        for subset in itertools.combinations(range(len(Q)), r):
            n_eval += 1
            A, _, _ = stacked_cost([Q[i] for i in subset], params)
            if A < best_A:
                best, best_A = subset, A
    if best is None:
        return [], n_eval
    return [Q[i] for i in best], n_eval


def calibrate_from_pairs(Q: list[PairScore], params: CalibParams) -> tuple[Pose2D, list[PairScore]]:
    chosen = mask_select(Q, params)[0] if params.masking else list(Q)
    if not chosen:
        raise CalibrationFailed("no usable trajectory pair")
    _, pose, _ = stacked_cost(chosen, params)
    if pose is None:
        raise CalibrationFailed("degenerate stacked geometry")
    return pose, chosen


def _diag(q: PairScore) -> dict:
    return {
        "ref_track": q.a.track_id, "track": q.b.track_id,
        "A": float(q.A), "xi": float(q.xi), "tau_bar": float(q.tau_bar), "K": int(q.K),
    }


def calibrate_sensor(trajs1, trajs_s, params: CalibParams) -> tuple[Pose2D, dict]:
    """Pose mapping sensor-s coordinates into sensor-1 coordinates."""
    Q = associate_tracks(trajs1, trajs_s, params)
    diag = {"pairs": [_diag(q) for q in Q], "n_pairs": len(Q)}
    if not Q:
        raise CalibrationFailed("no trajectory pair below the cost threshold", diag)
    try:
        pose, chosen = calibrate_from_pairs(Q, params)
    except CalibrationFailed as e:
        raise CalibrationFailed(str(e), diag) from None
    diag["n_selected"] = len(chosen)
    diag["selected"] = [_diag(q) for q in chosen]
    return pose, diag


def calibrate_network(trajs_by_sensor: dict[int, list[Trajectory]], params: CalibParams, ref_id: int = 1) -> CalibResult:
    if ref_id not in trajs_by_sensor:
        raise ValueError(f"reference sensor {ref_id} missing")
    out = {ref_id: SensorCalib(ref_id, Pose2D.identity())}
    ref = trajs_by_sensor[ref_id]
    for s in sorted(trajs_by_sensor):
        if s == ref_id:
            continue
        try:
            pose, diag = calibrate_sensor(ref, trajs_by_sensor[s], params)
            out[s] = SensorCalib(s, pose, diag["n_pairs"], diag["n_selected"], diag["selected"])
        except CalibrationFailed as e:
            log.warning("calibration of sensor %d failed: %s", s, e)
            out[s] = SensorCalib(s, None, e.diagnostics.get("n_pairs", 0), 0,
                                 e.diagnostics.get("pairs", []), error=str(e))
    return CalibResult(out, ref_id)


def trajectories_from_messages(msgs, min_points: int = 2) -> dict[int, list[Trajectory]]:
    """Per-sensor trajectory logs assembled from track-set messages."""
    acc: dict[int, dict[int, list]] = {}
    for m in sorted(msgs, key=lambda m: (m.sensor_id, m.timestamp)):
        per = acc.setdefault(m.sensor_id, {})
        for tid, x, _ in m.tracks:
            per.setdefault(tid, []).append((m.timestamp, x[0], x[1]))
    out: dict[int, list[Trajectory]] = {}
    for s, per in acc.items():
        lst = []
        for tid in sorted(per):
            rows = np.array(per[tid])
            if len(rows) >= min_points:
                lst.append(Trajectory(s, tid, rows[:, 0], rows[:, 1:]))
        out[s] = lst
    return out
