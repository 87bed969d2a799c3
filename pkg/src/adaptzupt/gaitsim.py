"""Synthetic foot-mounted IMU data.

The foot alternates between stance (exactly stationary) and swing. A swing
moves the foot along a straight stride with a cycloidal progress profile,
lifts it with a ``sin^4`` profile and pitches it, so position, velocity and
acceleration are continuous at the stance boundaries. Foot placements are
spaced evenly along the path and heading changes are spread over the swing.

Measurements are synthesized by inverting the strapdown equations used in
:mod:`adaptzupt.zupt_ins`: acceleration from central second differences of
the sampled positions, angular rate from the attitude increment between
consecutive samples.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from adaptzupt._so3 import wrap_angle
from adaptzupt.sensor_io import ImuSequence

GRAVITY = 9.81
RECTANGLE_SIZE = (2.6, 3.2)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class GaitProfile:
    """Gait cycle shape.

    ``stance_fraction`` is the ground-contact share of the cycle. Contact
    splits into a heel rocker (foot rolls down about the heel), foot-flat
    (exactly stationary, the labelled stance) and a toe rocker (heel rises
    about the toe); ``flat_fraction`` and ``heel_rocker_fraction`` are
    shares of contact time.
    """

    speed: float  # km/h, average over the walking part
    stride_length: float  # m, one foot's stride
    stance_fraction: float
    foot_lift: float  # m, extra heel clearance at mid-swing
    flat_fraction: float = 0.5
    heel_rocker_fraction: float = 0.2
    heel_strike_pitch: float = 0.3  # rad, toe up at initial contact
    toe_off_pitch: float = 0.5  # rad, toe down at toe-off
    foot_length: float = 0.26  # m, heel to toe pivot
    lever_arm: tuple[float, float, float] = (0.16, 0.0, 0.07)  # sensor relative to heel, foot frame
    variability: float = 0.0  # relative stride-to-stride spread of timing, pitch and lift
    lateral_swing: float = 0.0  # m, std of the sideways bulge of the swing path

    def __post_init__(self):
        if not (self.speed > 0 and self.stride_length > 0 and self.foot_lift > 0):
            raise ScenarioError("gait speed, stride length and foot lift must be positive")
        if not 0.0 < self.stance_fraction < 1.0:
            raise ScenarioError("stance_fraction must lie in (0, 1)")
        if not (0.0 < self.flat_fraction and self.heel_rocker_fraction >= 0.0
                and self.flat_fraction + self.heel_rocker_fraction <= 1.0):
            raise ScenarioError("flat and heel-rocker fractions must split the contact time")
        if self.foot_length <= 0:
            raise ScenarioError("foot_length must be positive")

    @property
    def speed_ms(self) -> float:
        return self.speed / 3.6


GAIT_PRESETS = {
    "walk": GaitProfile(4.5, 1.35, 0.62, 0.08, 0.55, 0.20, 0.30, 0.50, variability=0.08, lateral_swing=0.02),
    "fast-walk": GaitProfile(6.5, 1.60, 0.52, 0.10, 0.42, 0.22, 0.35, 0.60, variability=0.08, lateral_swing=0.02),
    "jog": GaitProfile(8.0, 1.80, 0.40, 0.12, 0.32, 0.24, 0.40, 0.70, variability=0.08, lateral_swing=0.02),
}


@dataclass(frozen=True)
class TrajectorySpec:
    """Either an explicit planar waypoint list or a rectangle walked ``laps`` times.

    The rectangle starts at its corner (0, 0) heading along +x and is walked
    counter-clockwise. ``stand_time`` seconds of standing still are added at
    both ends.
    """

    waypoints: tuple[tuple[float, float], ...] | None = None
    rectangle: tuple[float, float] | None = None
    laps: int = 1
    stand_time: float = 2.0

    def __post_init__(self):
        if (self.waypoints is None) == (self.rectangle is None):
            raise ScenarioError("give exactly one of waypoints or rectangle")
        if self.laps < 1:
            raise ScenarioError("laps must be >= 1")
        if self.waypoints is not None and len(self.waypoints) < 2:
            raise ScenarioError("need at least two waypoints")

    @classmethod
    def rectangle_preset(cls, laps: int = 1, stand_time: float = 2.0) -> "TrajectorySpec":
        return cls(rectangle=RECTANGLE_SIZE, laps=laps, stand_time=stand_time)

    def path(self) -> np.ndarray:
        if self.rectangle is not None:
            w, h = self.rectangle
            lap = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
            pts = lap * self.laps + [(0.0, 0.0)]
            return np.array(pts, dtype=float)
        pts = np.array(self.waypoints, dtype=float)
        if self.laps > 1:
            if not np.allclose(pts[0], pts[-1]):
                raise ScenarioError("laps > 1 requires a closed waypoint loop")
            pts = np.vstack([pts[:-1]] * self.laps + [pts[-1:]])
        return pts

    @property
    def closed(self) -> bool:
        p = self.path()
        return bool(np.allclose(p[0], p[-1]))


@dataclass(frozen=True)
class NoiseSpec:
    acc_std: float = 0.0
    gyro_std: float = 0.0
    acc_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gyro_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0
    # heel-strike ringing: peak (m/s^2) per (m/s)^2 of gait speed
    impact_gain: float = 0.0
    impact_freq: float = 30.0  # Hz
    impact_decay: float = 0.05  # s, e-folding time
    # per-recording turn-on biases drawn from the seed, added to the fixed ones
    acc_bias_std: float = 0.0
    gyro_bias_std: float = 0.0
    # per-recording scale-factor and axis-misalignment errors (both sensors)
    scale_std: float = 0.0
    misalign_std: float = 0.0

    def __post_init__(self):
        if min(self.acc_std, self.gyro_std, self.impact_gain, self.acc_bias_std, self.gyro_bias_std,
               self.scale_std, self.misalign_std) < 0:
            raise ScenarioError("noise magnitudes must be >= 0")
        if not (self.impact_freq > 0 and self.impact_decay > 0):
            raise ScenarioError("impact frequency and decay must be positive")

    @classmethod
    def consumer(cls, seed: int = 0) -> "NoiseSpec":
        return cls(
            0.05, 0.005, seed=seed, impact_gain=3.0, impact_decay=0.05,
            acc_bias_std=0.05, gyro_bias_std=0.003, scale_std=0.005, misalign_std=0.005,
        )

    def biases(self) -> tuple[np.ndarray, np.ndarray]:
        """Total accelerometer and gyroscope bias vectors for this seed."""
        b = np.random.default_rng([self.seed, 1]).standard_normal((2, 3))
        return (
            np.asarray(self.acc_bias, dtype=float) + self.acc_bias_std * b[0],
            np.asarray(self.gyro_bias, dtype=float) + self.gyro_bias_std * b[1],
        )

    def sensor_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Accelerometer and gyroscope error matrices ``I + diag(scale) + misalignment``."""
        rng = np.random.default_rng([self.seed, 2])
        out = []
        for _ in range(2):
            M = np.eye(3) + np.diag(self.scale_std * rng.standard_normal(3))
            off = self.misalign_std * rng.standard_normal(6)
            M[[0, 0, 1, 1, 2, 2], [1, 2, 0, 2, 0, 1]] += off
            out.append(M)
        return out[0], out[1]


NOISE_PRESETS = {"none": NoiseSpec(), "consumer": NoiseSpec.consumer()}


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Sensor pose trace sampled at ``fs``; rows align with the IMU samples."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    stance: np.ndarray
    fs: float
    heel_strikes: np.ndarray = field(repr=False, default=None)
    speed: float = 0.0  # m/s
    # one extra sample on each side, used by the differencing
    _p_ext: np.ndarray = field(repr=False, default=None)
    _R_ext: np.ndarray = field(repr=False, default=None)

    @property
    def yaw(self) -> np.ndarray:
        return np.arctan2(self.R[:, 1, 0], self.R[:, 0, 0])

    def __len__(self) -> int:
        return self.t.size


# ---------------------------------------------------------------------------
# trajectory synthesis

FLAT, HEEL_ROCKER, TOE_ROCKER, SWING = 0, 1, 2, 3


def _strides(path: np.ndarray, profile: GaitProfile):
    """Split the polyline into (start, end, heading) strides of the heel.

    Foot placements are spaced evenly by arc length over the whole path, so
    strides run through corners the way a walker cuts them; each stride's
    heading is the direction of its chord.
    """
    seg = np.diff(path, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(arc[-1])
    if total == 0.0:
        raise ScenarioError("trajectory has zero length")
    if total < profile.stride_length:
        raise ScenarioError("trajectory is shorter than one stride")
    n = max(1, int(round(total / profile.stride_length)))
    s = total * np.arange(n + 1) / n
    pts = np.column_stack([np.interp(s, arc, path[:, 0]), np.interp(s, arc, path[:, 1])])
    pts[-1] = path[-1]
    strides = []
    for a, b in zip(pts[:-1], pts[1:]):
        strides.append((a, b, math.atan2(b[1] - a[1], b[0] - a[0])))
    return strides


def _phase_table(spec: TrajectorySpec, profile: GaitProfile, seed: int = 0):
    """Rows of (t0, duration, kind, x0, y0, x1, y1, psi0, dpsi, beta0, beta1, lift, bulge).

    ``x, y`` are heel positions on the ground at the start and end of the
    phase's stride; ``beta`` is the foot pitch (positive = toe down).
    Stride-to-stride variability is drawn from ``seed``; cycle durations
    are rescaled so the average speed stays exact.
    """
    strides = _strides(spec.path(), profile)
    n = len(strides)
    v = profile.speed_ms
    rng = np.random.default_rng(seed)
    sd = profile.variability

    def jitter(size=n):
        if sd == 0.0:
            return np.ones(size)
        return np.clip(1.0 + sd * rng.standard_normal(size), 0.5, 1.5)

    lengths = np.array([float(np.hypot(*(e - a))) for a, e, _ in strides])
    cycles = lengths / v * jitter()
    cycles *= lengths.sum() / v / cycles.sum()
    contact_share = np.clip(profile.stance_fraction * jitter(), 0.05, 0.95)
    flat_share = np.clip(profile.flat_fraction * jitter(), 0.02, 0.9)
    heel_share = np.clip(profile.heel_rocker_fraction * jitter(), 0.0, 0.95 - flat_share)
    b_hs = -profile.heel_strike_pitch * jitter()
    b_to = profile.toe_off_pitch * jitter()
    lifts = profile.foot_lift * jitter()
    bulge = profile.lateral_swing * rng.standard_normal(n) if profile.lateral_swing else np.zeros(n)

    rows = []
    t = 0.0
    x, y = strides[0][0]
    # on a closed loop, start facing the way the walk ends so that the
    # lever-arm offset closes as well
    psi = strides[-1][2] if spec.closed else strides[0][2]
    rows.append([t, spec.stand_time, FLAT, x, y, x, y, psi, 0.0, 0.0, 0.0, 0.0, 0.0])
    t += spec.stand_time
    for i, (start, end, heading) in enumerate(strides):
        contact = contact_share[i] * cycles[i]
        d_swing = cycles[i] - contact
        d_heel = heel_share[i] * contact
        d_flat = flat_share[i] * contact
        d_toe = contact - d_heel - d_flat
        dpsi = float(wrap_angle(heading - psi))
        sx, sy = start
        ex, ey = end
        rows.append([t, d_toe, TOE_ROCKER, sx, sy, sx, sy, psi, 0.0, 0.0, b_to[i], 0.0, 0.0])
        t += d_toe
        rows.append([t, d_swing, SWING, sx, sy, ex, ey, psi, dpsi, b_to[i], b_hs[i], lifts[i], bulge[i]])
        t += d_swing
        psi = psi + dpsi
        rows.append([t, d_heel, HEEL_ROCKER, ex, ey, ex, ey, psi, 0.0, b_hs[i], 0.0, 0.0, 0.0])
        t += d_heel
        rows.append([t, d_flat, FLAT, ex, ey, ex, ey, psi, 0.0, 0.0, 0.0, 0.0, 0.0])
        t += d_flat
    rows[-1][1] += spec.stand_time
    t += spec.stand_time
    return np.array(rows), t


def _attitudes(yaw, pitch) -> np.ndarray:
    """Stack of ``Rz(yaw) @ Ry(pitch)``."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    R = np.zeros((np.size(yaw), 3, 3))
    R[:, 0, 0] = cy * cp
    R[:, 0, 1] = -sy
    R[:, 0, 2] = cy * sp
    R[:, 1, 0] = sy * cp
    R[:, 1, 1] = cy
    R[:, 1, 2] = sy * sp
    R[:, 2, 0] = -sp
    R[:, 2, 2] = cp
    return R


def _sensor_pose(times, table, profile: GaitProfile):
    """Sensor position (n,3), attitude (n,3,3) and foot-flat flags at arbitrary times."""
    times = np.clip(times, 0.0, None)
    j = np.searchsorted(table[:, 0], times, side="right") - 1
    row = table[np.clip(j, 0, len(table) - 1)]
    kind = row[:, 2].astype(int)
    tau = np.clip((times - row[:, 0]) / np.where(row[:, 1] > 0, row[:, 1], 1.0), 0.0, 1.0)
    tau = np.where(kind == FLAT, 0.0, tau)
    # cycloidal blend: zero rate and zero curvature at both ends
    c = tau - np.sin(2.0 * np.pi * tau) / (2.0 * np.pi)
    yaw = row[:, 7] + row[:, 8] * c
    pitch = row[:, 9] + (row[:, 10] - row[:, 9]) * c
    R = _attitudes(yaw, pitch)

    lever = np.asarray(profile.lever_arm, dtype=float)
    toe = np.array([profile.foot_length, 0.0, 0.0])
    heel_start = np.column_stack([row[:, 3:5], np.zeros(len(row))])
    heel_end = np.column_stack([row[:, 5:7], np.zeros(len(row))])

    # heel on the ground for flat and heel-rocker phases
    heel = heel_start.copy()

    # toe rocker pivots about the toe, which sits at the flat-foot toe position
    flat_R = _attitudes(row[:, 7], np.zeros(len(row)))
    toe_pt = heel_start + flat_R @ toe
    m = kind == TOE_ROCKER
    heel[m] = toe_pt[m] - R[m] @ toe

    m = kind == SWING
    if np.any(m):
        R_off = _attitudes(row[m, 7], row[m, 9])
        h0 = toe_pt[m] - R_off @ toe  # heel at toe-off
        h1 = heel_end[m]
        bump = np.sin(np.pi * tau[m]) ** 4
        heel[m] = h0 + (h1 - h0) * c[m, None]
        heel[m, 2] += row[m, 11] * bump
        # sideways bulge, perpendicular to the stride direction
        heel[m, 0] += -np.sin(row[m, 7]) * row[m, 12] * bump
        heel[m, 1] += np.cos(row[m, 7]) * row[m, 12] * bump

    p = heel + R @ lever
    return p, R, kind == FLAT


def synth_trajectory(spec: TrajectorySpec, profile: GaitProfile, fs: float = 100.0, seed: int = 0) -> GroundTruth:
    """Sample the sensor pose along ``spec`` walked with ``profile``.

    ``seed`` drives the stride-to-stride variability only.
    """
    if fs < 50.0:
        raise ScenarioError("fs must be at least 50 Hz")
    table, total = _phase_table(spec, profile, seed)
    n = int(math.floor(total * fs + 1e-9)) + 1
    times = np.arange(-1, n + 1) / fs
    p_ext, R_ext, flat = _sensor_pose(times, table, profile)

    h = 1e-5
    p_plus, _, _ = _sensor_pose(times[1:-1] + h, table, profile)
    p_minus, _, _ = _sensor_pose(times[1:-1] - h, table, profile)
    v = (p_plus - p_minus) / (2.0 * h)
    stance = flat[1:-1].copy()
    v[stance] = 0.0

    return GroundTruth(
        t=times[1:-1].copy(),
        p=p_ext[1:-1].copy(),
        v=v,
        R=R_ext[1:-1].copy(),
        stance=stance,
        fs=float(fs),
        heel_strikes=table[table[:, 2] == HEEL_ROCKER, 0].copy(),
        speed=profile.speed_ms,
        _p_ext=p_ext,
        _R_ext=R_ext,
    )


def _batch_log(R) -> np.ndarray:
    """Rotation vectors of a stack of small rotations (angle well below pi)."""
    tr = np.einsum("nii->n", R)
    c = np.clip(0.5 * (tr - 1.0), -1.0, 1.0)
    angle = np.arccos(c)
    w = np.stack([R[:, 2, 1] - R[:, 1, 2], R[:, 0, 2] - R[:, 2, 0], R[:, 1, 0] - R[:, 0, 1]], axis=1)
    s = np.sin(angle)
    scale = np.where(angle < 1e-8, 0.5, angle / (2.0 * np.where(s == 0.0, 1.0, s)))
    return w * scale[:, None]


def impact_ringing(gt: GroundTruth, noise: NoiseSpec) -> np.ndarray:
    """Body-frame accelerometer ringing excited at each heel strike, shape (n, 3)."""
    out = np.zeros((gt.t.size, 3))
    if noise.impact_gain == 0.0 or gt.heel_strikes is None:
        return out
    amp = noise.impact_gain * gt.speed**2
    span = 8.0 * noise.impact_decay
    for ths in gt.heel_strikes:
        i0 = np.searchsorted(gt.t, ths)
        i1 = np.searchsorted(gt.t, ths + span)
        dt = gt.t[i0:i1] - ths
        ring = amp * np.exp(-dt / noise.impact_decay) * np.sin(2.0 * np.pi * noise.impact_freq * dt)
        out[i0:i1, 2] += ring
        out[i0:i1, 0] += 0.5 * ring
    return out


def imu_from_trajectory(gt: GroundTruth, noise: NoiseSpec = NoiseSpec(), g: float = GRAVITY) -> ImuSequence:
    """Synthesize specific force and angular rate for ``gt``, then add noise."""
    fs = gt.fs
    p = gt._p_ext
    R = gt._R_ext
    a = (p[2:] - 2.0 * p[1:-1] + p[:-2]) * fs * fs
    g_vec = np.array([0.0, 0.0, -g])
    f = np.einsum("nji,nj->ni", R[1:-1], a - g_vec)
    dR = np.einsum("nji,njk->nik", R[:-2], R[1:-1])
    w = _batch_log(dR) * fs

    Ma, Mg = noise.sensor_matrices()
    f = f @ Ma.T
    w = w @ Mg.T
    rng = np.random.default_rng(noise.seed)
    n = gt.t.size
    if noise.acc_std > 0:
        f = f + noise.acc_std * rng.standard_normal((n, 3))
    if noise.gyro_std > 0:
        w = w + noise.gyro_std * rng.standard_normal((n, 3))
    acc_bias, gyro_bias = noise.biases()
    f = f + acc_bias + impact_ringing(gt, noise)
    w = w + gyro_bias
    return ImuSequence(gt.t, f, w, fs)


# ---------------------------------------------------------------------------
# scenario files and ground-truth export


@dataclass(frozen=True)
class Scenario:
    trajectory: TrajectorySpec
    gait: GaitProfile
    noise: NoiseSpec
    fs: float = 100.0

    def generate(self) -> tuple[ImuSequence, GroundTruth]:
        gt = synth_trajectory(self.trajectory, self.gait, self.fs, seed=self.noise.seed)
        return imu_from_trajectory(gt, self.noise), gt


def _tuple3(v, name):
    if isinstance(v, (int, float)):
        return (float(v),) * 3
    if len(v) != 3:
        raise ScenarioError(f"{name} must be a scalar or a 3-vector")
    return tuple(float(x) for x in v)


def scenario_from_dict(d: dict) -> Scenario:
    """Build a scenario from the JSON layout ``{trajectory, gait, noise, fs, seed}``.

    ``gait`` and ``noise`` may be preset names or objects; an object may
    name a ``preset`` and override individual fields.
    """
    try:
        traj = d["trajectory"]
        if isinstance(traj, str):
            if traj != "rectangle":
                raise ScenarioError(f"unknown trajectory preset {traj!r}")
            traj = {"type": "rectangle"}
        stand = float(traj.get("stand_time", 2.0))
        laps = int(traj.get("laps", 1))
        if "waypoints" in traj:
            tspec = TrajectorySpec(
                waypoints=tuple(tuple(map(float, w)) for w in traj["waypoints"]),
                laps=laps,
                stand_time=stand,
            )
        else:
            w = float(traj.get("width", RECTANGLE_SIZE[0]))
            h = float(traj.get("height", RECTANGLE_SIZE[1]))
            tspec = TrajectorySpec(rectangle=(w, h), laps=laps, stand_time=stand)

        gait = d.get("gait", "walk")
        if isinstance(gait, str):
            gait = {"preset": gait}
        base = GAIT_PRESETS[gait.get("preset", "walk")]
        overrides = {k: v for k, v in gait.items() if k != "preset"}
        if "lever_arm" in overrides:
            overrides["lever_arm"] = _tuple3(overrides["lever_arm"], "lever_arm")
        profile = replace(base, **overrides)

        noise = d.get("noise", "consumer")
        if isinstance(noise, str):
            noise = {"preset": noise}
        nbase = NOISE_PRESETS[noise.get("preset", "none")]
        nover = {k: v for k, v in noise.items() if k != "preset"}
        for key in ("acc_bias", "gyro_bias"):
            if key in nover:
                nover[key] = _tuple3(nover[key], key)
        if "seed" in d:
            nover.setdefault("seed", int(d["seed"]))
        nspec = replace(nbase, **nover)
        return Scenario(tspec, profile, nspec, float(d.get("fs", 100.0)))
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario: {exc!r}") from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(d)


def write_ground_truth_csv(gt: GroundTruth, path) -> None:
    """Write ``t,x,y,z,yaw,stance`` rows."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "z", "yaw", "stance"])
        for t, p, yaw, st in zip(gt.t.tolist(), gt.p.tolist(), gt.yaw.tolist(), gt.stance.tolist()):
            w.writerow([repr(t), repr(p[0]), repr(p[1]), repr(p[2]), repr(yaw), int(st)])


def read_ground_truth_csv(path) -> dict[str, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {
        "t": data[:, 0],
        "p": data[:, 1:4],
        "yaw": data[:, 4],
        "stance": data[:, 5].astype(bool),
    }
