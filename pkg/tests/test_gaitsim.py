import json
import math

import numpy as np
import pytest

from adaptzupt.gaitsim import (
    GAIT_PRESETS,
    GaitProfile,
    NoiseSpec,
    ScenarioError,
    TrajectorySpec,
    imu_from_trajectory,
    load_scenario,
    read_ground_truth_csv,
    scenario_from_dict,
    synth_trajectory,
    write_ground_truth_csv,
)
from adaptzupt.gaitsim import _strides
from adaptzupt.zupt_ins import run_strapdown

RECT = TrajectorySpec.rectangle_preset(1)


@pytest.fixture(scope="module")
def walk_gt():
    return synth_trajectory(RECT, GAIT_PRESETS["walk"], 100.0, seed=0)


def horizontal_length(p):
    return float(np.hypot(*np.diff(p[:, :2], axis=0).T).sum())


def test_rectangle_path_length(walk_gt):
    assert RECT.path().shape == (5, 2)
    assert horizontal_length(walk_gt.p) == pytest.approx(11.6, rel=0.02)


@pytest.mark.parametrize("gait", sorted(GAIT_PRESETS))
def test_average_speed_matches_profile(gait):
    prof = GAIT_PRESETS[gait]
    spec = TrajectorySpec.rectangle_preset(2)
    gt = synth_trajectory(spec, prof, 100.0, seed=4)
    strides = _strides(spec.path(), prof)
    ground = sum(math.hypot(*(b - a)) for a, b, _ in strides)
    walking = gt.t[-1] - 2 * spec.stand_time
    assert ground / walking == pytest.approx(prof.speed_ms, rel=0.02)


def test_stance_velocity_exactly_zero(walk_gt):
    assert walk_gt.stance.any() and (~walk_gt.stance).any()
    assert np.all(walk_gt.v[walk_gt.stance] == 0.0)
    # the foot really is still: position identical across each stance sample pair
    both = walk_gt.stance[1:] & walk_gt.stance[:-1]
    assert np.all(np.abs(np.diff(walk_gt.p, axis=0)[both]) < 1e-12)


def test_swing_samples_move(walk_gt):
    speed = np.linalg.norm(walk_gt.v, axis=1)
    assert np.median(speed[~walk_gt.stance]) > 0.5


@pytest.mark.parametrize("laps", [1, 3])
def test_closed_loop_returns_to_start(laps):
    gt = synth_trajectory(TrajectorySpec.rectangle_preset(laps), GAIT_PRESETS["jog"], 100.0, seed=laps)
    assert np.all(np.abs(gt.p[-1] - gt.p[0]) <= 1e-9)


def test_stationary_gt_gives_gravity_only():
    gt = synth_trajectory(TrajectorySpec.rectangle_preset(1, stand_time=3.0), GAIT_PRESETS["walk"], 100.0)
    imu = imu_from_trajectory(gt, NoiseSpec())
    still = slice(5, int(2.5 * 100))
    assert np.all(gt.stance[still])
    np.testing.assert_allclose(np.linalg.norm(imu.f[still], axis=1), 9.81, atol=1e-9)
    np.testing.assert_allclose(imu.w[still], 0.0, atol=1e-12)


@pytest.mark.parametrize("b", [0.002, 0.01])
def test_gyro_bias_heading_drift(b):
    gt = synth_trajectory(TrajectorySpec.rectangle_preset(3), GAIT_PRESETS["walk"], 100.0)
    clean = run_strapdown(imu_from_trajectory(gt, NoiseSpec()))
    biased = run_strapdown(imu_from_trajectory(gt, NoiseSpec(gyro_bias=(0.0, 0.0, b))))
    dyaw = np.unwrap(biased.yaw) - np.unwrap(clean.yaw)
    rate = np.polyfit(biased.t, dyaw, 1)[0]
    assert rate == pytest.approx(b, rel=0.10)


def replay_error(fs):
    gt = synth_trajectory(TrajectorySpec.rectangle_preset(7), GAIT_PRESETS["walk"], fs, seed=2)
    tr = run_strapdown(imu_from_trajectory(gt, NoiseSpec()))
    return float(np.linalg.norm(tr.p[-1] - gt.p[-1] - (tr.p[0] - gt.p[0])))


def test_doubling_rate_does_not_hurt():
    e100 = replay_error(100.0)
    e200 = replay_error(200.0)
    assert e100 < 0.1
    assert e200 <= e100


def test_seeded_output_bit_identical():
    a = imu_from_trajectory(synth_trajectory(RECT, GAIT_PRESETS["walk"], seed=9), NoiseSpec.consumer(9))
    b = imu_from_trajectory(synth_trajectory(RECT, GAIT_PRESETS["walk"], seed=9), NoiseSpec.consumer(9))
    assert a.equals(b)
    c = imu_from_trajectory(synth_trajectory(RECT, GAIT_PRESETS["walk"], seed=10), NoiseSpec.consumer(10))
    assert not np.array_equal(a.f, c.f)


def test_noise_levels():
    gt = synth_trajectory(RECT, GAIT_PRESETS["walk"], seed=1)
    clean = imu_from_trajectory(gt, NoiseSpec())
    noisy = imu_from_trajectory(gt, NoiseSpec(acc_std=0.05, gyro_std=0.005, seed=1))
    assert np.std(noisy.f - clean.f) == pytest.approx(0.05, rel=0.05)
    assert np.std(noisy.w - clean.w) == pytest.approx(0.005, rel=0.05)


def test_waypoint_trajectory_heading_follows_path():
    spec = TrajectorySpec(waypoints=((0.0, 0.0), (0.0, 10.0)))
    gt = synth_trajectory(spec, GAIT_PRESETS["walk"])
    assert np.allclose(gt.yaw[gt.stance], math.pi / 2, atol=1e-9)
    assert gt.p[-1, 1] - gt.p[0, 1] == pytest.approx(10.0, abs=1e-9)


@pytest.mark.parametrize(
    "bad",
    [
        dict(waypoints=((0.0, 0.0), (0.5, 0.0))),
        dict(waypoints=((1.0, 1.0), (1.0, 1.0))),
    ],
)
def test_short_trajectories_rejected(bad):
    with pytest.raises(ScenarioError):
        synth_trajectory(TrajectorySpec(**bad), GAIT_PRESETS["walk"])


def test_trajectory_gait_noise_validation():
    with pytest.raises(ScenarioError):
        TrajectorySpec()
    with pytest.raises(ScenarioError):
        TrajectorySpec(rectangle=(1.0, 1.0), laps=0)
    with pytest.raises(ScenarioError):
        GaitProfile(4.5, 1.3, 1.2, 0.1)
    with pytest.raises(ScenarioError):
        NoiseSpec(acc_std=-1.0)
    with pytest.raises(ScenarioError):
        synth_trajectory(RECT, GAIT_PRESETS["walk"], fs=20.0)


def test_scenario_files(tmp_path):
    d = {"trajectory": {"type": "rectangle", "laps": 2}, "gait": {"preset": "jog", "foot_lift": 0.1}, "noise": "consumer", "seed": 5}
    sc = scenario_from_dict(d)
    assert sc.trajectory.laps == 2 and sc.gait.foot_lift == 0.1 and sc.noise.seed == 5
    p = tmp_path / "s.json"
    p.write_text(json.dumps(d))
    assert load_scenario(p) == sc
    p.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(p)
    for bad in ({"trajectory": "circle"}, {}, {"trajectory": "rectangle", "gait": "crawl"}):
        with pytest.raises(ScenarioError):
            scenario_from_dict(bad)


def test_ground_truth_csv_roundtrip(tmp_path, walk_gt):
    p = tmp_path / "gt.csv"
    write_ground_truth_csv(walk_gt, p)
    back = read_ground_truth_csv(p)
    assert np.array_equal(back["p"], walk_gt.p)
    assert np.array_equal(back["stance"], walk_gt.stance)
    assert p.read_text().splitlines()[0] == "t,x,y,z,yaw,stance"
