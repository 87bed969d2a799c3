"""Maximum-likelihood selection of the zero-velocity detection threshold.

For every candidate threshold the IMU data are turned into stride odometry,
FootSLAM is run on it, and the log of the product of the per-step
pre-normalization weight sums is taken as that threshold's log-likelihood.
The threshold with the largest value wins.

Also provides the speed-classifier benchmark that picks one of three
per-gait thresholds from the average speed of a recording.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._so3 import rot_z
from .evaluation import RecordingResult, closure_vector, loop_closure_error, path_length
from .footslam import FootSlamConfig, ParticleDepletion, StepResult, run_footslam
from .sensor_io import ImuSequence
from .zupt_ins import (
    DetectorParams,
    InsConfig,
    NavTrajectory,
    OdometryError,
    extract_odometry,
    mask_from_statistics,
    run_zupt_ins,
    shoe_statistics,
    stance_midpoints,
    stance_phases,
)

DEFAULT_GRID = (1.0, 1e4, 25)
TIE_TOL = 1e-9
GAIT_CLASSES = ("walk", "fast-walk", "jog")
# threshold of the navigation solution the speed classifier looks at; high
# enough that stances are still found at jogging pace
CLASSIFY_GAMMA = 1e3


class CalibrationError(RuntimeError):
    pass


class LikelihoodError(ValueError):
    def __init__(self, k: int, value: float):
        super().__init__(f"weight sum S at step {k} is {value!r}; the likelihood needs S > 0")
        self.k = k


# ---------------------------------------------------------------------------
# grid and likelihood


@dataclass(frozen=True)
class ThresholdGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise ValueError("a threshold grid needs at least 2 values")
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise ValueError("thresholds must be positive and finite")
        if any(b <= a for a, b in zip(vals[:-1], vals[1:])):
            raise ValueError("thresholds must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]


def make_grid(gamma_min: float, gamma_max: float, M: int) -> ThresholdGrid:
    """``M`` geometrically spaced thresholds from ``gamma_min`` to ``gamma_max`` inclusive.

    >>> make_grid(1, 100, 3).values
    (1.0, 10.0, 100.0)
    """
    if not (0 < gamma_min < gamma_max and math.isfinite(gamma_max)):
        raise ValueError("need 0 < gamma_min < gamma_max < inf")
    if int(M) != M or M < 2:
        raise ValueError("M must be an integer >= 2")
    M = int(M)
    lo, hi = math.log(gamma_min), math.log(gamma_max)
    vals = [math.exp(lo + (hi - lo) * j / (M - 1)) for j in range(M)]
    vals[0], vals[-1] = float(gamma_min), float(gamma_max)
    return ThresholdGrid(tuple(vals))


@dataclass(frozen=True)
class LikelihoodTrace:
    increments: np.ndarray
    loglik: float
    gamma: float | None = None

    @property
    def steps(self) -> int:
        return int(self.increments.size)

    @property
    def cumulative(self) -> np.ndarray:
        """Running log-likelihood after each step (not including the initial 0)."""
        return np.cumsum(self.increments)


def accumulate_likelihood(results: Sequence, gamma: float | None = None) -> LikelihoodTrace:
    """Sum ``log S_k`` over the steps; an empty input gives 0.

    ``results`` holds :class:`StepResult` items or bare weight sums.
    """
    S = [float(r.S) if isinstance(r, StepResult) else float(r) for r in results]
    for k, s in enumerate(S):
        if not (s > 0 and math.isfinite(s)):
            raise LikelihoodError(k, s)
    inc = np.log(np.array(S, dtype=float)) if S else np.zeros(0)
    return LikelihoodTrace(inc, math.fsum(inc.tolist()), gamma)


# ---------------------------------------------------------------------------
# Algorithm: grid search


@dataclass(frozen=True)
class ThresholdResult:
    gamma: float
    loglik: float  # -inf when the pipeline failed
    steps: int
    loop_closure_m: float | None
    error: str | None = None

    @property
    def loglik_per_step(self) -> float | None:
        if not math.isfinite(self.loglik) or self.steps == 0:
            return None
        return self.loglik / self.steps

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "loglik": self.loglik if math.isfinite(self.loglik) else None,
            "steps": self.steps,
            "loop_closure_m": self.loop_closure_m,
            "loglik_per_step": self.loglik_per_step,
            "error": self.error,
        }


@dataclass
class CalibrationReport:
    rows: list[ThresholdResult]
    chosen_gamma: float
    tie: bool = False
    tie_note: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> tuple[float, ...]:
        return tuple(r.gamma for r in self.rows)

    @property
    def logliks(self) -> np.ndarray:
        return np.array([r.loglik for r in self.rows])

    def to_dict(self) -> dict:
        return {
            "chosen_gamma": self.chosen_gamma,
            "tie": self.tie,
            "tie_note": self.tie_note,
            "thresholds": [r.to_dict() for r in self.rows],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationReport":
        rows = [
            ThresholdResult(
                float(r["gamma"]),
                -math.inf if r["loglik"] is None else float(r["loglik"]),
                int(r["steps"]),
                r.get("loop_closure_m"),
                r.get("error"),
            )
            for r in d["thresholds"]
        ]
        return cls(rows, float(d["chosen_gamma"]), bool(d.get("tie", False)), d.get("tie_note"), d.get("meta", {}))

    @classmethod
    def read(cls, path) -> "CalibrationReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def table(self) -> str:
        lines = [f"{'gamma':>12} {'loglik':>12} {'steps':>6} {'per_step':>9} {'loop_m':>8}"]
        for r in self.rows:
            ll = f"{r.loglik:12.3f}" if math.isfinite(r.loglik) else f"{'-inf':>12}"
            ps = f"{r.loglik_per_step:9.4f}" if r.loglik_per_step is not None else f"{'-':>9}"
            lc = f"{r.loop_closure_m:8.3f}" if r.loop_closure_m is not None else f"{'-':>8}"
            mark = "  <- chosen" if r.gamma == self.chosen_gamma else ""
            lines.append(f"{r.gamma:12.4g} {ll} {r.steps:6d} {ps} {lc}{mark}")
        return "\n".join(lines)


def choose_threshold(rows: Sequence[ThresholdResult], tol: float = TIE_TOL) -> tuple[float, bool, str | None]:
    """Argmax of the log-likelihood; near-ties (within ``tol``) go to the smaller threshold."""
    finite = [r for r in rows if math.isfinite(r.loglik)]
    if not finite:
        raise CalibrationError("all thresholds failed: no threshold produced usable odometry")
    best = max(r.loglik for r in finite)
    tied = sorted(r.gamma for r in finite if r.loglik >= best - tol)
    if len(tied) > 1:
        return tied[0], True, f"log-likelihoods within {tol:g} for gamma {tied}; chose the smallest"
    return tied[0], False, None


def horizontal_closure(traj: NavTrajectory) -> float:
    return loop_closure_error(traj)


def _odometry_for(seq, gamma, stats, params, ins_config):
    mask = mask_from_statistics(stats, gamma, len(seq))
    traj = run_zupt_ins(seq, None, params, ins_config, zv_mask=mask)
    lc = horizontal_closure(traj)
    try:
        return extract_odometry(traj), lc, None
    except OdometryError as exc:
        return None, lc, str(exc)


def _score(gamma, odo, lc, err, slam_cfg) -> ThresholdResult:
    if odo is None:
        return ThresholdResult(float(gamma), -math.inf, 0, lc, err)
    try:
        res = run_footslam(odo, slam_cfg)
        trace = accumulate_likelihood(res.steps, gamma)
    except (ParticleDepletion, LikelihoodError) as exc:
        return ThresholdResult(float(gamma), -math.inf, 0, lc, str(exc))
    return ThresholdResult(float(gamma), trace.loglik, trace.steps, lc)


def evaluate_threshold(
    seq: ImuSequence,
    gamma: float,
    stats: np.ndarray | None = None,
    params: DetectorParams = DetectorParams(),
    ins_config: InsConfig = InsConfig(),
    slam_cfg: FootSlamConfig | Sequence[FootSlamConfig] = FootSlamConfig(),
):
    """Odometry, FootSLAM and log-likelihood for one threshold.

    With a sequence of FootSLAM configs the odometry is computed once and a
    list of results (one per config) is returned.
    """
    if stats is None:
        stats = shoe_statistics(seq, params)
    odo, lc, err = _odometry_for(seq, gamma, stats, params, ins_config)
    if isinstance(slam_cfg, FootSlamConfig):
        return _score(gamma, odo, lc, err, slam_cfg)
    return [_score(gamma, odo, lc, err, c) for c in slam_cfg]


def _worker(args):
    return evaluate_threshold(*args)


def _as_grid(grid) -> ThresholdGrid:
    if grid is None:
        return make_grid(*DEFAULT_GRID)
    if isinstance(grid, ThresholdGrid):
        return grid
    return ThresholdGrid(tuple(grid))


def calibrate_many(
    seq: ImuSequence,
    grid: ThresholdGrid | Sequence[float] | None,
    slam_cfgs: Sequence[FootSlamConfig],
    params: DetectorParams = DetectorParams(),
    ins_config: InsConfig = InsConfig(),
    jobs: int = 1,
) -> list[CalibrationReport]:
    """One report per FootSLAM config, sharing the odometry of each threshold."""
    grid = _as_grid(grid)
    slam_cfgs = list(slam_cfgs)
    if not slam_cfgs:
        raise ValueError("need at least one FootSLAM config")
    stats = shoe_statistics(seq, params)
    tasks = [(seq, g, stats, params, ins_config, slam_cfgs) for g in grid]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            per_gamma = list(ex.map(_worker, tasks))
    else:
        per_gamma = [_worker(t) for t in tasks]
    reports = []
    for c, cfg in enumerate(slam_cfgs):
        rows = [pg[c] for pg in per_gamma]
        chosen, tie, note = choose_threshold(rows)
        meta = {
            "seed": cfg.seed,
            "particles": cfg.N,
            "alpha": cfg.alpha,
            "hex_radius": cfg.hex.radius,
            "samples": len(seq),
        }
        reports.append(CalibrationReport(rows, chosen, tie, note, meta))
    return reports


def calibrate(
    seq: ImuSequence,
    grid: ThresholdGrid | Sequence[float] | None = None,
    params: DetectorParams = DetectorParams(),
    ins_config: InsConfig = InsConfig(),
    slam_cfg: FootSlamConfig = FootSlamConfig(),
    jobs: int = 1,
) -> CalibrationReport:
    """Run the grid search and return the per-threshold table with the chosen threshold.

    Every threshold's FootSLAM run uses the same seed. ``jobs > 1`` spreads the
    thresholds over worker processes; the report does not depend on it.
    """
    return calibrate_many(seq, grid, [slam_cfg], params, ins_config, jobs)[0]


# ---------------------------------------------------------------------------
# speed classifier benchmark


def movement_mask(traj: NavTrajectory, min_stand: float = 1.0) -> np.ndarray:
    """Samples that are not part of a standing period.

    A standing period is a stationary run lasting at least ``min_stand``
    seconds; the short foot-flat intervals of each stride count as movement.
    """
    fs = 1.0 / float(np.median(np.diff(traj.t)))
    moving = np.ones(len(traj), dtype=bool)
    for a, b in stance_phases(traj.zv):
        if (b - a) / fs >= min_stand:
            moving[a:b] = False
    return moving


def average_moving_speed(traj: NavTrajectory, min_stand: float = 1.0) -> float:
    """Average horizontal speed while moving, m/s.

    Uses the stride cycles between consecutive stance phases that are both
    shorter than ``min_stand`` (so standing still is left out): total
    horizontal chord between their midpoints over the total time between
    them. Recordings with fewer than two such stances fall back to path
    length over the time spent outside standing periods.
    """
    fs = 1.0 / float(np.median(np.diff(traj.t)))
    phases = stance_phases(traj.zv)
    mids = [((a + b - 1) // 2, (b - a) / fs < min_stand) for a, b in phases]
    dist = dur = 0.0
    for (i, short_i), (j, short_j) in zip(mids[:-1], mids[1:]):
        if short_i and short_j:
            dist += float(np.hypot(*(traj.p[j, :2] - traj.p[i, :2])))
            dur += float(traj.t[j] - traj.t[i])
    if dur > 0.0:
        return dist / dur
    moving = movement_mask(traj, min_stand)
    both = moving[1:] & moving[:-1]
    dt = np.diff(traj.t)
    if not both.any() or dt[both].sum() == 0:
        raise ValueError("trajectory is stationary throughout")
    step = np.hypot(*np.diff(traj.p[:, :2], axis=0).T)
    return float(step[both].sum() / dt[both].sum())


def classify_speed(speed_kmh: float, cut_low: float = 5.5, cut_high: float = 7.5) -> str:
    if not cut_low < cut_high:
        raise ValueError("cut_low must be below cut_high")
    if speed_kmh < cut_low:
        return "walk"
    if speed_kmh > cut_high:
        return "jog"
    return "fast-walk"


def speed_classify(traj: NavTrajectory, cut_low: float = 5.5, cut_high: float = 7.5, min_stand: float = 1.0) -> str:
    """Gait class from the average horizontal speed while moving (cuts in km/h)."""
    return classify_speed(3.6 * average_moving_speed(traj, min_stand), cut_low, cut_high)


def benchmark_thresholds(
    seq: ImuSequence,
    pseudo_truth: np.ndarray,
    truth_times: np.ndarray,
    grid: Sequence[float],
    params: DetectorParams = DetectorParams(),
    ins_config: InsConfig = InsConfig(),
) -> tuple[float, np.ndarray]:
    """Threshold whose navigation solution best matches a pseudo ground truth.

    ``pseudo_truth`` (n, 2) holds planar positions at ``truth_times`` in the
    navigation frame. Each threshold's trajectory is shifted to start where
    the pseudo truth starts, then scored by time-averaged position RMSE.
    Returns the best threshold and the per-threshold RMSE array.
    """
    stats = shoe_statistics(seq, params)
    idx = np.clip(np.searchsorted(seq.t, truth_times), 0, len(seq) - 1)
    errs = []
    for g in grid:
        traj = run_zupt_ins(seq, None, params, ins_config, zv_mask=mask_from_statistics(stats, g, len(seq)))
        est = traj.p[idx, :2] - traj.p[idx[0], :2] + pseudo_truth[0]
        errs.append(float(np.sqrt(np.mean(np.sum((est - pseudo_truth) ** 2, axis=1)))))
    errs = np.array(errs)
    return float(grid[int(np.argmin(errs))]), errs


def footslam_pseudo_truth(
    seq: ImuSequence,
    gamma: float,
    params: DetectorParams = DetectorParams(),
    ins_config: InsConfig = InsConfig(),
    slam_cfg: FootSlamConfig = FootSlamConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """FootSLAM position estimates mapped into the navigation frame, with their times."""
    traj = run_zupt_ins(seq, gamma, params, ins_config)
    odo = extract_odometry(traj)
    res = run_footslam(odo, slam_cfg)
    # the filter starts at the first stance midpoint with heading 0
    k0 = int(stance_midpoints(traj)[0])
    R = rot_z(float(traj.yaw[k0]))[:2, :2]
    xy = res.trajectory[:, :2] @ R.T + traj.p[k0, :2]
    times = traj.t[k0] + np.concatenate([[0.0], np.cumsum([z.dt for z in odo])])
    return xy, times


@dataclass(frozen=True)
class BenchmarkRow:
    recording: str
    label: str
    method: str
    gamma: float
    error_m: float
    closure: tuple[float, float]
    length_m: float

    def to_result(self) -> RecordingResult:
        return RecordingResult(self.recording, self.method, self.error_m, self.length_m, self.closure)


def benchmark_fixed_and_classified(
    recordings: Sequence[tuple[str, str, ImuSequence]],
    per_class_thresholds: dict[str, float],
    fixed_grid: Sequence[float],
    benchmark_thresholds: dict[str, float] | None = None,
    params: DetectorParams = DetectorParams(),
    ins_config: InsConfig = InsConfig(),
    cut_low: float = 5.5,
    cut_high: float = 7.5,
    classify_gamma: float = CLASSIFY_GAMMA,
) -> list[BenchmarkRow]:
    """Loop-closure results for every recording under every method.

    ``recordings`` holds ``(name, gait_label, sequence)``. Methods are
    ``adaptive`` (the threshold calibrated for the recording's own gait
    label), ``benchmark`` (the threshold of the class assigned by the speed
    classifier; uses ``benchmark_thresholds`` or, when absent, the adaptive
    per-class values) and ``fixed:<gamma>`` for every grid value. The speed
    classifier reads the navigation solution computed with ``classify_gamma``.
    """
    if not recordings:
        raise ValueError("no recordings to evaluate")
    fixed_grid = [float(g) for g in fixed_grid]
    bench = benchmark_thresholds if benchmark_thresholds is not None else per_class_thresholds
    rows = []
    for name, label, seq in recordings:
        stats = shoe_statistics(seq, params)
        cache: dict[float, NavTrajectory] = {}

        def traj_for(g):
            if g not in cache:
                cache[g] = run_zupt_ins(seq, None, params, ins_config, zv_mask=mask_from_statistics(stats, g, len(seq)))
            return cache[g]

        def row(method, g):
            tr = traj_for(g)
            d = closure_vector(tr.p)
            return BenchmarkRow(
                name, label, method, float(g), loop_closure_error(tr), (float(d[0]), float(d[1])), path_length(tr)
            )

        if label not in per_class_thresholds:
            raise KeyError(f"no calibrated threshold for gait label {label!r} of {name}")
        rows.append(row("adaptive", per_class_thresholds[label]))
        cls = speed_classify(traj_for(classify_gamma), cut_low, cut_high)
        rows.append(row("benchmark", bench[cls]))
        for g in fixed_grid:
            rows.append(row(f"fixed:{g:.6g}", g))
    return rows


__all__ = [
    "BenchmarkRow",
    "CLASSIFY_GAMMA",
    "CalibrationError",
    "CalibrationReport",
    "DEFAULT_GRID",
    "LikelihoodError",
    "LikelihoodTrace",
    "ThresholdGrid",
    "ThresholdResult",
    "accumulate_likelihood",
    "average_moving_speed",
    "benchmark_fixed_and_classified",
    "benchmark_thresholds",
    "calibrate",
    "calibrate_many",
    "choose_threshold",
    "classify_speed",
    "evaluate_threshold",
    "footslam_pseudo_truth",
    "make_grid",
    "movement_mask",
    "speed_classify",
]
