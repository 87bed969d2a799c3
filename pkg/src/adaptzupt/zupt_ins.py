"""Zero-velocity-aided inertial navigation.

Maps an IMU sequence and a detection threshold to per-stride planar
odometry: SHOE detection, strapdown mechanization, a 9-state error-state
Kalman filter (position, velocity, attitude error) with zero-velocity
pseudo-measurements, an optional fixed-interval smoother, and stride
extraction between stance-phase midpoints.

Navigation frame is z-up with gravity ``(0, 0, -g)``; a resting sensor
measures specific force ``R.T @ (0, 0, g)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from adaptzupt._so3 import skew, so3_exp, wrap_angle, yaw_of
from adaptzupt.sensor_io import ImuSequence

GRAVITY = 9.81


class InsError(RuntimeError):
    pass


class DivergenceError(InsError):
    def __init__(self, index: int):
        super().__init__(f"error covariance became non-finite at sample {index}")
        self.index = index


class CovarianceError(InsError):
    def __init__(self, k: int, what: str):
        super().__init__(f"error covariance {what} at sample {k}")
        self.k = k


class OdometryError(InsError):
    pass


@dataclass(frozen=True)
class DetectorParams:
    sigma_a: float = 0.1  # m/s^2
    sigma_w: float = 0.01  # rad/s
    window: int = 5  # samples
    g: float = GRAVITY

    def __post_init__(self):
        if not (self.sigma_a > 0 and self.sigma_w > 0 and self.g > 0):
            raise ValueError("detector parameters must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1 sample")


@dataclass(frozen=True)
class InsConfig:
    """Filter tuning. Noise values are per-sample standard deviations."""

    acc_noise: float = 0.1  # m/s^2
    gyro_noise: float = 0.01  # rad/s
    zupt_std: float = 0.01  # m/s
    init_pos_std: float = 1e-4
    init_vel_std: float = 1e-3
    init_att_std: float = math.radians(1.0)
    smooth: bool = False
    init_samples: int | None = None  # defaults to the detector window
    renormalize_every: int = 64
    check_covariance: bool = False  # eigenvalue check after every predict and update (slow)


def check_threshold(gamma) -> float:
    gamma = float(gamma)
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ValueError(f"threshold must be positive and finite, got {gamma!r}")
    return gamma


# ---------------------------------------------------------------------------
# detector


def shoe_statistic(f, w, params: DetectorParams = DetectorParams()) -> float:
    """SHOE test statistic of one window of ``W`` samples.

    Parameters
    ----------
    f, w : array_like, shape (W, 3)
        Specific force and angular rate.
    params : DetectorParams

    Returns
    -------
    float
        ``mean_k(|f_k - g f_mean/|f_mean||^2 / sigma_a^2 + |w_k|^2 / sigma_w^2)``
    """
    f = np.asarray(f, dtype=float)
    w = np.asarray(w, dtype=float)
    if f.shape != (params.window, 3) or w.shape != (params.window, 3):
        raise ValueError(f"window must hold exactly {params.window} samples")
    fm = f.mean(axis=0)
    nrm = np.linalg.norm(fm)
    if nrm == 0.0:
        raise ValueError("zero mean specific force in window (free fall)")
    dev = f - params.g * fm / nrm
    return float(
        np.sum(dev * dev) / params.sigma_a**2 / params.window
        + np.sum(w * w) / params.sigma_w**2 / params.window
    )


def shoe_statistics(seq: ImuSequence, params: DetectorParams = DetectorParams()) -> np.ndarray:
    """Statistic of every window; entry k covers samples ``k .. k+W-1``."""
    W = params.window
    if len(seq) < W:
        raise ValueError("sequence shorter than the detector window")
    fw = sliding_window_view(seq.f, W, axis=0)  # (n-W+1, 3, W)
    ww = sliding_window_view(seq.w, W, axis=0)
    fm = fw.mean(axis=2)
    nrm = np.linalg.norm(fm, axis=1)
    if np.any(nrm == 0.0):
        k = int(np.argmax(nrm == 0.0))
        raise ValueError(f"zero mean specific force in window starting at sample {k}")
    dev = fw - (params.g * fm / nrm[:, None])[:, :, None]
    return (
        np.sum(dev * dev, axis=(1, 2)) / params.sigma_a**2 / W
        + np.sum(ww * ww, axis=(1, 2)) / params.sigma_w**2 / W
    )


def mask_from_statistics(stats: np.ndarray, gamma: float, n: int) -> np.ndarray:
    gamma = check_threshold(gamma)
    mask = np.empty(n, dtype=bool)
    m = stats.size
    mask[:m] = stats < gamma
    mask[m:] = mask[m - 1]
    return mask


def detect_zero_velocity(seq: ImuSequence, gamma: float, params: DetectorParams = DetectorParams()) -> np.ndarray:
    """Boolean stationary mask: sample k is stationary iff the window starting there scores below gamma."""
    return mask_from_statistics(shoe_statistics(seq, params), gamma, len(seq))


# ---------------------------------------------------------------------------
# strapdown


@dataclass(frozen=True, eq=False)
class NavState:
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    t: float = 0.0

    @property
    def yaw(self) -> float:
        return yaw_of(self.R)


def _mech(p, v, R, f, w, dt, g):
    """One strapdown step; attitude first, then velocity, then trapezoidal position."""
    R1 = R @ so3_exp(w * dt)
    a = R1 @ f
    a[2] -= g
    v1 = v + a * dt
    p1 = p + 0.5 * (v + v1) * dt
    return p1, v1, R1


def _renormalize(R):
    # first-order projection back onto SO(3)
    return 1.5 * R - 0.5 * (R @ R.T @ R)


def strapdown_step(s: NavState, rec, dt: float, g: float = GRAVITY) -> NavState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    p, v, R = _mech(s.p, s.v, s.R, np.asarray(rec.f, float), np.asarray(rec.w, float), dt, g)
    return NavState(p, v, _renormalize(R), s.t + dt)


def initial_attitude(f_mean) -> np.ndarray:
    """Roll and pitch from a resting specific-force vector; heading zero."""
    fx, fy, fz = np.asarray(f_mean, dtype=float)
    roll = math.atan2(fy, fz)
    pitch = -math.atan2(fx, math.hypot(fy, fz))
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    # R = Ry(pitch) @ Rx(roll), body -> navigation
    return np.array(
        [
            [cp, sp * sr, sp * cr],
            [0.0, cr, -sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


@dataclass(frozen=True, eq=False)
class NavTrajectory:
    """Per-sample navigation solution and the stationary mask that produced it."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    zv: np.ndarray

    def __len__(self) -> int:
        return self.t.size

    @property
    def yaw(self) -> np.ndarray:
        return np.arctan2(self.R[:, 1, 0], self.R[:, 0, 0])

    @property
    def states(self) -> list[NavState]:
        return [NavState(self.p[k], self.v[k], self.R[k], float(self.t[k])) for k in range(len(self))]

    def write_csv(self, path) -> None:
        """Write ``t,px,py,pz,vx,vy,vz,yaw,zv`` rows."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "px", "py", "pz", "vx", "vy", "vz", "yaw", "zv"])
            rows = np.column_stack([self.t, self.p, self.v, self.yaw]).tolist()
            for row, z in zip(rows, self.zv.tolist()):
                w.writerow([repr(x) for x in row] + [int(z)])


def _initial_state(seq: ImuSequence, n_init: int):
    n_init = max(1, min(n_init, len(seq)))
    R0 = initial_attitude(seq.f[:n_init].mean(axis=0))
    return np.zeros(3), np.zeros(3), R0


def run_strapdown(seq: ImuSequence, params: DetectorParams = DetectorParams(), config: InsConfig = InsConfig()) -> NavTrajectory:
    """Free-inertial solution (no zero-velocity updates), same initialization as the filter."""
    return run_zupt_ins(seq, None, params, config, zv_mask=np.zeros(len(seq), dtype=bool))


# ---------------------------------------------------------------------------
# error-state filter


def run_zupt_ins(
    seq: ImuSequence,
    gamma: float | None,
    params: DetectorParams = DetectorParams(),
    config: InsConfig = InsConfig(),
    zv_mask: np.ndarray | None = None,
) -> NavTrajectory:
    """ZUPT-aided INS.

    ``zv_mask`` bypasses detection (``gamma`` is then ignored); this lets a
    threshold sweep compute the detector statistic once.
    """
    n = len(seq)
    if zv_mask is None:
        zv_mask = detect_zero_velocity(seq, gamma, params)
    zv_mask = np.asarray(zv_mask, dtype=bool)
    if zv_mask.shape != (n,):
        raise ValueError("zv_mask length must equal the sequence length")

    g = params.g
    n_init = config.init_samples or params.window
    p, v, R = _initial_state(seq, n_init)

    P = np.diag(
        [config.init_pos_std**2] * 3 + [config.init_vel_std**2] * 3 + [config.init_att_std**2] * 3
    )
    Rz = np.eye(3) * config.zupt_std**2
    I9 = np.eye(9)
    F = np.eye(9)
    t = seq.t
    f_all = seq.f
    w_all = seq.w

    P_out = np.empty((n, 3))
    pos = np.empty((n, 3))
    vel = np.empty((n, 3))
    att = np.empty((n, 3, 3))

    smooth = config.smooth
    if smooth:
        Fs = np.empty((n, 9, 9))
        P_filt = np.empty((n, 9, 9))
        P_pred = np.empty((n, 9, 9))
        corr = np.zeros((n, 9))

    def update(k, p, v, R, P):
        S = P[3:6, 3:6] + Rz
        PHt = P[:, 3:6]
        K = np.linalg.solve(S, PHt.T).T
        dx = -K @ v
        IKH = I9.copy()
        IKH[:, 3:6] -= K
        P = IKH @ P @ IKH.T + K @ Rz @ K.T
        p = p + dx[0:3]
        v = v + dx[3:6]
        R = so3_exp(dx[6:9]) @ R
        if smooth:
            corr[k] = dx
        return p, v, R, P

    if zv_mask[0]:
        p, v, R, P = update(0, p, v, R, P)
    pos[0], vel[0], att[0] = p, v, R
    if smooth:
        P_filt[0] = P
        P_pred[0] = P

    for k in range(1, n):
        dt = t[k] - t[k - 1]
        p, v, R = _mech(p, v, R, f_all[k], w_all[k], dt, g)
        if k % config.renormalize_every == 0:
            R = _renormalize(R)
        # error dynamics: dv' = -[a]x eps, dp' = dv
        a = R @ f_all[k]
        F[0:3, 3:6] = np.eye(3) * dt
        F[3:6, 6:9] = -skew(a) * dt
        P = F @ P @ F.T
        qv = (config.acc_noise * dt) ** 2
        qa = (config.gyro_noise * dt) ** 2
        P[3, 3] += qv
        P[4, 4] += qv
        P[5, 5] += qv
        P[6, 6] += qa
        P[7, 7] += qa
        P[8, 8] += qa
        if smooth:
            Fs[k - 1] = F
            P_pred[k] = P
        if config.check_covariance:
            _check_cov(P, k)
        if zv_mask[k]:
            p, v, R, P = update(k, p, v, R, P)
            if config.check_covariance:
                _check_cov(P, k)
        P = 0.5 * (P + P.T)
        if not np.isfinite(P[0, 0] + P[4, 4] + P[8, 8]) or not np.all(np.isfinite(P)):
            raise DivergenceError(k)
        if smooth:
            P_filt[k] = P
        pos[k], vel[k], att[k] = p, v, R

    if smooth:
        pos, vel, att = _rts_smooth(pos, vel, att, Fs, P_filt, P_pred, corr)

    return NavTrajectory(t.copy(), pos, vel, att, zv_mask.copy())


def _check_cov(P, k, tol=1e-12):
    if np.max(np.abs(P - P.T)) > tol:
        raise CovarianceError(k, "lost symmetry")
    if np.linalg.eigvalsh(P).min() < -tol:
        raise CovarianceError(k, "has a negative eigenvalue")


def _rts_smooth(pos, vel, att, Fs, P_filt, P_pred, corr):
    """Rauch-Tung-Striebel pass over the closed-loop error states.

    The forward filter resets its error estimate after each correction, so
    the smoothed error at k relative to the corrected nominal state obeys
    ``e_k = C_k (d_{k+1} + e_{k+1})`` with ``d`` the applied correction.
    """
    n = pos.shape[0]
    pos, vel, att = pos.copy(), vel.copy(), att.copy()
    e = np.zeros(9)
    for k in range(n - 2, -1, -1):
        C = np.linalg.solve(P_pred[k + 1].T, (P_filt[k] @ Fs[k].T).T).T
        e = C @ (corr[k + 1] + e)
        pos[k] += e[0:3]
        vel[k] += e[3:6]
        att[k] = so3_exp(e[6:9]) @ att[k]
    return pos, vel, att


# ---------------------------------------------------------------------------
# odometry


class OdometryStep(NamedTuple):
    """Planar stride: displacement in the previous heading frame, heading change, duration."""

    d: tuple[float, float]
    dpsi: float
    dt: float


def stance_phases(zv_mask) -> list[tuple[int, int]]:
    """Maximal runs of True as half-open ``(start, stop)`` index pairs."""
    z = np.concatenate([[False], np.asarray(zv_mask, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(z.astype(np.int8)))
    return [(int(a), int(b)) for a, b in zip(edges[0::2], edges[1::2])]


def stance_midpoints(traj: NavTrajectory) -> np.ndarray:
    return np.array([(a + b - 1) // 2 for a, b in stance_phases(traj.zv)], dtype=int)


def _split_points(xy: np.ndarray, a: int, b: int, max_stride: float) -> list[int]:
    """Sample indices in (a, b) cutting the path xy[a..b] into pieces shorter than max_stride.

    Pieces have roughly equal arc length; chords are bounded by arcs, so the
    piece count only grows when one sample step overshoots.
    """
    seg = np.hypot(*np.diff(xy[a : b + 1], axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    n = int(arc[-1] // max_stride) + 1
    while True:
        if n == 1:
            cuts = []
        else:
            targets = arc[-1] * np.arange(1, n) / n
            cuts = sorted(set(int(i) for i in np.searchsorted(arc, targets)) - {0, b - a})
        pts = [a] + [a + c for c in cuts] + [b]
        chords = [math.hypot(*(xy[j] - xy[i])) for i, j in zip(pts[:-1], pts[1:])]
        if max(chords) < max_stride or n > b - a:
            return [a + c for c in cuts]
        n += 1


def extract_odometry(traj: NavTrajectory, max_stride: float = 3.0) -> list[OdometryStep]:
    """One step per pair of consecutive stance-phase midpoints.

    When the navigation path between two midpoints is ``max_stride`` or
    longer (stance phases were missed), it is encoded as several steps cut
    at intermediate samples of equal arc length, each shorter than
    ``max_stride``. Composing the steps lands on every stance midpoint.
    Raises :class:`OdometryError` when fewer than two stance phases exist.
    """
    if not max_stride > 0:
        raise ValueError("max_stride must be positive")
    mids = stance_midpoints(traj)
    if mids.size < 2:
        raise OdometryError("no strides detected")
    xy = traj.p[:, :2]
    yaw = traj.yaw
    knots = [int(mids[0])]
    for a, b in zip(mids[:-1].tolist(), mids[1:].tolist()):
        chord = math.hypot(*(xy[b] - xy[a]))
        if chord >= max_stride or float(np.sum(np.hypot(*np.diff(xy[a : b + 1], axis=0).T))) >= max_stride:
            knots.extend(_split_points(xy, a, b, max_stride))
        knots.append(b)
    steps = []
    for i, j in zip(knots[:-1], knots[1:]):
        dx, dy = xy[j] - xy[i]
        c, s = math.cos(yaw[i]), math.sin(yaw[i])
        d = (float(c * dx + s * dy), float(-s * dx + c * dy))
        if math.hypot(*d) >= max_stride:
            raise OdometryError(f"cannot split the path ending at t={traj.t[j]:.2f} s below {max_stride} m")
        steps.append(OdometryStep(d, float(wrap_angle(yaw[j] - yaw[i])), float(traj.t[j] - traj.t[i])))
    return steps


def compose_odometry(steps, start=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Chain steps in the plane; returns (len(steps)+1, 3) rows of x, y, psi."""
    x, y, psi = start
    out = [(x, y, psi)]
    for st in steps:
        c, s = math.cos(psi), math.sin(psi)
        x += c * st.d[0] - s * st.d[1]
        y += s * st.d[0] + c * st.d[1]
        psi = float(wrap_angle(psi + st.dpsi))
        out.append((x, y, psi))
    return np.array(out)


def write_odometry_csv(steps, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dt", "dx", "dy", "dpsi"])
        for st in steps:
            w.writerow([repr(float(v)) for v in (st.dt, st.d[0], st.d[1], st.dpsi)])


def read_odometry_csv(path) -> list[OdometryStep]:
    steps = []
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["dt", "dx", "dy", "dpsi"]:
            raise ValueError(f"{path}: header must be dt,dx,dy,dpsi")
        for row in r:
            if row:
                dt, dx, dy, dpsi = map(float, row)
                steps.append(OdometryStep((dx, dy), dpsi, dt))
    return steps
