"""Seeded trials behind the headline experiments.

Each function runs one seed of one experiment and returns plain numbers, so
the scripts, the CLI sweep and the acceptance tests all share one code path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluation import CalibReport, MotReport, calib_errors, score_record
from .fusion import FcParams
from .geom import Pose2D, apply_pose, residual_sum
from .presets import calibration_scenario, occlusion_scenario
from .selfcal import (CalibParams, CalibrationFailed, PairScore, Trajectory, associate_tracks,
                      calibrate_from_pairs, calibrate_network, pair_cost, trajectories_from_messages)
from .sim import Scenario, run_scenario, simulate_sensors

RATIOS = (0.2, 0.5, 0.8, 1.0, 2.0, 5.0, 10.0, 25.0)


def selfcal_trial(seed: int, params: CalibParams | None = None, sc: Scenario | None = None) -> CalibReport:
    """Calibrate every sensor against sensor 1 and score against ground truth."""
    sc = sc or calibration_scenario(seed)
    params = params or CalibParams(T_c=sc.sensors[0].T_s)
    trajs = trajectories_from_messages(simulate_sensors(sc))
    for s in sc.sensors:
        trajs.setdefault(s.id, [])
    res = calibrate_network(trajs, params)
    return calib_errors(res.poses(), {s.id: sc.gt_pose(s.id) for s in sc.sensors})


# --- masking under a corrupted association -------------------------------------------


def _mean_residual(q: PairScore, pose: Pose2D) -> float:
    src = q.b.p[q.aligned.ks]
    dst = q.a.p[q.aligned.k1]
    return residual_sum(pose, src, dst) / max(q.K, 1)


def wrong_pair(trajs1: list[Trajectory], trajs_s: list[Trajectory], Q: list[PairScore], gt: Pose2D,
               params: CalibParams, min_residual: float = 0.5) -> PairScore:
    """A plausible but false association: two trajectories of different targets.

    Among cross pairs not chosen by the association step, take the longest
    usable one whose mean misfit under the true pose exceeds ``min_residual``.
    If no such pair exists, fabricate one by displacing a correct partner
    trajectory by 1 m and 20 degrees, as a ghost track would.
    """
    taken = {(q.a.track_id, q.b.track_id) for q in Q}
    best = None
    for a in trajs1:
        for b in trajs_s:
            if (a.track_id, b.track_id) in taken:
                continue
            q = pair_cost(a, b, params)
            if not np.isfinite(q.A) or _mean_residual(q, gt) < min_residual:
                continue
            if best is None or q.K > best.K:
                best = q
    if best is not None:
        return best
    ref = max(Q, key=lambda q: q.K)
    shift = Pose2D.from_angle(20.0, (1.0, 0.0))
    ghost = Trajectory(ref.b.sensor_id, -1, ref.b.t, apply_pose(shift, ref.b.p))
    return pair_cost(ref.a, ghost, params)


@dataclass
class MaskingOutcome:
    masked: dict[int, float]  # sensor id -> position error, m
    unmasked: dict[int, float]


def masking_trial(seed: int, params: CalibParams | None = None, sc: Scenario | None = None) -> MaskingOutcome:
    """Inject one wrong pair per sensor and calibrate with and without masking."""
    sc = sc or calibration_scenario(seed)
    params = params or CalibParams(T_c=sc.sensors[0].T_s)
    trajs = trajectories_from_messages(simulate_sensors(sc))
    ref = trajs.get(1, [])
    masked, unmasked = {}, {}
    for s in sorted(trajs):
        if s == 1:
            continue
        gt = sc.gt_pose(s)
        Q = associate_tracks(ref, trajs[s], params)
        if not Q:
            masked[s] = unmasked[s] = np.inf
            continue
        Q = Q[: params.max_pairs - 1] + [wrong_pair(ref, trajs[s], Q, gt, params)]
        for flag, out in ((True, masked), (False, unmasked)):
            p = CalibParams(params.T_c, params.A_self, params.max_pairs, params.min_overlap_s, flag)
            try:
                pose, _ = calibrate_from_pairs(Q, p)
                out[s] = float(np.linalg.norm(pose.t - gt.t))
            except CalibrationFailed:
                out[s] = np.inf
    return MaskingOutcome(masked, unmasked)


# --- fusion --------------------------------------------------------------------------


@dataclass
class FusionGain:
    fused: MotReport
    singles: dict[int, MotReport]

    @property
    def best_single(self) -> float:
        return max(r.MOTA for r in self.singles.values())


def fusion_gain_trial(seed: int, fc_params: FcParams | None = None, sc: Scenario | None = None) -> FusionGain:
    """Fused MOTA of all sensors versus each sensor tracked alone, on one sensor log."""
    sc = sc or occlusion_scenario(seed)
    fc_params = fc_params or FcParams(T_c=sc.sensors[0].T_s)
    msgs = simulate_sensors(sc)
    fused = score_record(run_scenario(sc, fc_params, messages=msgs))
    singles = {s.id: score_record(run_scenario(sc, fc_params, messages=msgs, sensor_ids=[s.id]))
               for s in sc.sensors}
    return FusionGain(fused, singles)


def rate_trial(seed: int, ratios=RATIOS, sc: Scenario | None = None, calib="gt") -> dict[float, MotReport]:
    """Replay one recorded sensor log through the FC at each T_c / T_s ratio."""
    sc = sc or occlusion_scenario(seed)
    T_s = sc.sensors[0].T_s
    msgs = simulate_sensors(sc)
    return {float(r): score_record(run_scenario(sc, FcParams(T_c=r * T_s), calib=calib, messages=msgs))
            for r in ratios}
