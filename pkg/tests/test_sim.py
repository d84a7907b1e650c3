import numpy as np
import pytest

from radarfuse.evaluation import score_record
from radarfuse.geom import Pose2D
from radarfuse.presets import SETUPS, make_scenario, occlusion_scenario, preset_targets
from radarfuse.sim import (KINDS, InvalidScenario, Scenario, SensorModel, SensorSpec, TargetSpec, frame_times,
                           gen_trajectory, in_fov, observe, occluded, run_scenario, scenario_paths,
                           simulate_sensors, substream)
from radarfuse.track import polar_covariance


def boresight_sensor(fov=60.0):
    return SensorSpec(1, Pose2D.identity(), fov_deg=fov)


def exact_model(**kw):
    base = dict(sigma_r=0.0, sigma_theta_deg=0.0, p_d=1.0, sigma_tau=0.0)
    return SensorModel(**{**base, **kw})


def test_line_walk_uniform_motion():
    path = gen_trajectory("in-line", {"a": (0, 0), "b": (5, 0), "speed": 1.0}, 4.0)
    np.testing.assert_allclose(path.at(2.0), [2.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(path.at(0.0), [0.0, 0.0])


def test_line_walk_turns_back():
    path = gen_trajectory("parallel", {"a": (1, 1), "b": (3, 1), "speed": 1.0}, 5.0)
    np.testing.assert_allclose(path.at(3.0), [2.0, 1.0], atol=1e-12)


def test_circle_radius_constant():
    path = gen_trajectory("circular", {"center": (3.5, 2), "radius": 1.5, "period": 10.0}, 30.0)
    r = np.linalg.norm(path.p - [3.5, 2], axis=1)
    assert np.abs(r - 1.5).max() < 1e-9


def test_free_walk_determinism():
    a = gen_trajectory("free", {}, 20.0, seed=1)
    b = gen_trajectory("free", {}, 20.0, seed=1)
    c = gen_trajectory("free", {}, 20.0, seed=2)
    np.testing.assert_array_equal(a.p, b.p)
    assert not np.array_equal(a.p, c.p)


@pytest.mark.parametrize("kind", KINDS)
def test_paths_bounded_and_slow(kind):
    for setup in SETUPS:
        sc = make_scenario(setup, kind, 3, seed=3)
        for path in scenario_paths(sc):
            assert np.all(path.p >= 0) and np.all(path.p <= [7, 4])
            speed = np.linalg.norm(np.diff(path.p, axis=0), axis=1) * 100
            assert speed.max() <= 1.5 + 1e-6


def test_path_leaving_room_is_invalid():
    with pytest.raises(InvalidScenario):
        gen_trajectory("in-line", {"a": (1, 1), "b": (9, 1)}, 10.0)
    with pytest.raises(InvalidScenario):
        gen_trajectory("zigzag", {}, 10.0)
    with pytest.raises(InvalidScenario):
        gen_trajectory("in-line", {"a": (1, 1)}, 10.0)


def test_scenario_validation():
    s1 = boresight_sensor()
    with pytest.raises(InvalidScenario):
        Scenario([], [])
    with pytest.raises(InvalidScenario):
        Scenario([SensorSpec(2, Pose2D.identity())], [])
    with pytest.raises(InvalidScenario):
        Scenario([s1], [], duration=0.0)
    with pytest.raises(InvalidScenario):
        SensorModel(p_d=0.0)
    with pytest.raises(InvalidScenario):
        preset_targets("free", 4)


def test_boresight_detection_is_exact():
    dets, ids = observe(boresight_sensor(), exact_model(), np.array([[3.0, 0.0]]), np.random.default_rng(0))
    np.testing.assert_array_equal(dets[0], [3.0, 0.0])
    assert ids == [0]


def test_hidden_behind_another_target():
    world = np.array([[2.0, 0.0], [4.0, 0.0]])
    dets, ids = observe(boresight_sensor(), exact_model(), world, np.random.default_rng(0))
    assert ids == [0]
    assert occluded([0, 0], world, 1, 0.25) and not occluded([0, 0], world, 0, 0.25)


def test_fov_and_range_limits():
    s = SensorSpec(1, Pose2D.identity(), fov_deg=60.0, max_range=5.0)
    pts = np.array([[2.0, 0.0], [-1.0, 0.0], [1.0, 2.0], [6.0, 0.0]])
    np.testing.assert_array_equal(in_fov(s, pts), [True, False, False, False])


def test_noise_matches_polar_covariance():
    s = boresight_sensor()
    m = SensorModel(p_d=1.0)
    p = np.array([3.0, 1.2])
    rng = np.random.default_rng(9)
    draws = np.array([observe(s, m, p[None], rng)[0][0] for _ in range(10_000)])
    V = polar_covariance(p, m.sigma_r, m.sigma_theta_deg)
    emp = np.cov(draws.T)
    assert np.linalg.norm(emp - V) / np.linalg.norm(V) < 0.05


def test_variate_count_is_fixed():
    s = boresight_sensor()
    world = np.array([[2.0, 0.0], [-3.0, 0.0]])
    a, b = np.random.default_rng(1), np.random.default_rng(1)
    observe(s, SensorModel(), world, a)
    observe(s, SensorModel(p_d=0.1), world[::-1], b)
    assert a.random() == b.random()


def test_substreams_are_independent_and_stable():
    assert substream(0, "noise", 1).random() == substream(0, "noise", 1).random()
    assert substream(0, "noise", 1).random() != substream(0, "noise", 2).random()


def test_frame_times_jitter_bounded():
    s = boresight_sensor()
    t = frame_times(s, SensorModel(), 20.0, 0)
    d = np.diff(t)
    assert np.all(d > 0)
    assert np.all(np.abs(d - s.T_s) <= s.T_s / 2 + 1e-12)
    assert 0 < t[0] and t[-1] <= 20.0


def test_messages_arrive_after_emission():
    msgs = simulate_sensors(make_scenario("setup-1", "parallel", 2, seed=0, duration=5.0))
    assert all(m.arrival >= m.timestamp for m in msgs)
    per = {}
    for m in sorted(msgs, key=lambda m: m.timestamp):
        assert per.get(m.sensor_id, -1) < m.timestamp
        per[m.sensor_id] = m.timestamp


def test_noiseless_passthrough_accuracy():
    sensors = [SensorSpec(1, Pose2D.from_angle(0, (0.0, 2.0)))]
    # slow enough that the walk never turns around within the run
    tg = TargetSpec("in-line", {"a": (1.5, 1.0), "b": (5.5, 3.0), "speed": 0.2})
    sc = Scenario(sensors, [tg], duration=20.0, model=exact_model(delay=(0.0, 0.0)))
    rec = run_scenario(sc)
    err = [np.linalg.norm(snap.tracks[0][1][:2] - g.positions[0])
           for snap, g in zip(rec.snapshots, rec.gt) if snap.tau > 2.0 and snap.tracks]
    assert len(err) > 200
    assert np.sqrt(np.mean(np.square(err))) < 1e-3
    assert score_record(rec, warmup=2.0).MOTA == 1.0


def test_fused_beats_each_single_under_occlusion():
    sc = occlusion_scenario(0)
    msgs = simulate_sensors(sc)
    fused = score_record(run_scenario(sc, messages=msgs)).MOTA
    for s in (1, 2, 3):
        assert fused > score_record(run_scenario(sc, messages=msgs, sensor_ids=[s])).MOTA


def test_identical_seeds_identical_records():
    a = run_scenario(make_scenario("setup-2", "free", 2, seed=5, duration=8.0))
    b = run_scenario(make_scenario("setup-2", "free", 2, seed=5, duration=8.0))
    assert a.messages == b.messages
    assert all(x.tau == y.tau and len(x.tracks) == len(y.tracks) for x, y in zip(a.snapshots, b.snapshots))


def test_unknown_calibration_source():
    with pytest.raises(ValueError):
        run_scenario(make_scenario("setup-1", "parallel", 1, duration=2.0), calib="magic")
