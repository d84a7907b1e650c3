"""CLEAR-MOT tracking scores and calibration errors against ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assign import FORBIDDEN, solve_assignment
from .geom import Pose2D, orientation_angle

DEFAULT_GATE = 0.5


class UndefinedMetrics(ValueError):
    pass


@dataclass
class MotFrame:
    """One evaluation instant: GT and estimated positions keyed by id.

    ``ignore`` holds GT ids outside every sensor's FoV; they neither count
    toward the denominator nor turn a match on them into a false positive.
    """

    gt: dict[int, np.ndarray]
    est: dict[int, np.ndarray]
    ignore: set[int] = field(default_factory=set)


@dataclass
class MotReport:
    MOTA: float
    MOTP: float | None
    misses: int
    false_positives: int
    switches: int
    n_gt: int
    n_matches: int


def mota_motp(frames: list[MotFrame], gate: float = DEFAULT_GATE) -> MotReport:
    miss = fp = sw = n_gt = n_match = 0
    dist_sum = 0.0
    current: dict[int, int] = {}  # gt id -> est id matched in the previous frame
    last: dict[int, int] = {}  # gt id -> est id of its most recent match
    for fr in frames:
        gt = {g: np.asarray(p, float) for g, p in fr.gt.items()}
        est = {e: np.asarray(p, float) for e, p in fr.est.items()}
        matches: dict[int, int] = {}
        for g, e in current.items():
            if g in gt and e in est and np.linalg.norm(gt[g] - est[e]) <= gate:
                matches[g] = e
        used = set(matches.values())
        rg = sorted(g for g in gt if g not in matches)
        re = sorted(e for e in est if e not in used)
        if rg and re:
            D = np.array([[np.linalg.norm(gt[g] - est[e]) for e in re] for g in rg])
            D[D > gate] = FORBIDDEN
            for i, j in solve_assignment(D):
                matches[rg[i]] = re[j]
        for g, e in matches.items():
            if g in fr.ignore:
                continue
            if g in last and last[g] != e:
                sw += 1
            n_match += 1
            dist_sum += float(np.linalg.norm(gt[g] - est[e]))
        counted = [g for g in gt if g not in fr.ignore]
        n_gt += len(counted)
        miss += sum(1 for g in counted if g not in matches)
        fp += len(est) - len(matches)
        for g, e in matches.items():
            last[g] = e
        current = matches
    if n_gt == 0:
        raise UndefinedMetrics("no ground-truth objects to score against")
    mota = 1.0 - (miss + fp + sw) / n_gt
    motp = dist_sum / n_match if n_match else None
    return MotReport(mota, motp, miss, fp, sw, n_gt, n_match)


def frames_from_record(rec) -> list[MotFrame]:
    """Pair each FC snapshot with the ground truth sampled at its slot time."""
    frames = []
    for snap, g in zip(rec.snapshots, rec.gt):
        if abs(snap.tau - g.tau) > rec.fc_params.T_c:
            raise ValueError("snapshot and ground truth are not on a common grid")
        gt = {i: g.positions[i] for i in range(len(g.positions))}
        est = {tid: x[:2] for tid, x, _ in snap.tracks}
        ignore = {i for i in range(len(g.positions)) if not g.visible[i]}
        frames.append(MotFrame(gt, est, ignore))
    return frames


def score_record(rec, gate: float = DEFAULT_GATE, warmup: float = 0.0) -> MotReport:
    frames = [f for f, s in zip(frames_from_record(rec), rec.snapshots) if s.tau >= warmup]
    return mota_motp(frames, gate)


@dataclass
class SensorCalibError:
    position_m: float
    orientation_deg: float


@dataclass
class CalibReport:
    sensors: dict[int, SensorCalibError]
    absent: list[int] = field(default_factory=list)


def angle_error(theta_est: float, theta_gt: float) -> float:
    """|theta_est - theta_gt| wrapped into [0, 180] degrees."""
    d = (theta_est - theta_gt + 180.0) % 360.0 - 180.0
    return abs(d)


def calib_errors(est: dict[int, Pose2D | None], gt: dict[int, Pose2D]) -> CalibReport:
    """Per-sensor translation and orientation error; sensors without an estimate are absent."""
    out, absent = {}, []
    for sid in sorted(gt):
        pose = est.get(sid)
        if pose is None:
            absent.append(sid)
            continue
        out[sid] = SensorCalibError(
            float(np.linalg.norm(pose.t - gt[sid].t)),
            angle_error(orientation_angle(pose.R), orientation_angle(gt[sid].R)),
        )
    return CalibReport(out, absent)
