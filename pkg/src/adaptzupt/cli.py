"""Command-line front end.

Subcommands: ``simulate``, ``odometry``, ``slam``, ``calibrate`` and
``evaluate``. A JSON config file (``--config``) is the base layer; command
line flags override it. A seed is mandatory, from the config or ``--seed``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from .calibration import (
    CLASSIFY_GAMMA,
    DEFAULT_GRID,
    CalibrationError,
    accumulate_likelihood,
    benchmark_fixed_and_classified,
    calibrate,
    make_grid,
)
from .evaluation import (
    ecdf,
    group_by_method,
    safe_name,
    summarize,
    write_ecdf_csv,
    write_results_csv,
    write_summary_json,
)
from .footslam import FootSlamConfig, ParticleDepletion, run_footslam, write_map_csv, write_trajectory_csv
from .gaitsim import ScenarioError, scenario_from_dict, write_ground_truth_csv
from .hexgrid import HexGridConfig
from .sensor_io import ImuFormatError, parse_imu_csv, read_manifest, write_imu_csv
from .zupt_ins import (
    DetectorParams,
    InsConfig,
    InsError,
    extract_odometry,
    read_odometry_csv,
    run_zupt_ins,
    write_odometry_csv,
)


class UsageError(Exception):
    """Bad arguments or configuration (exit code 2)."""


@dataclass
class RunConfig:
    seed: int
    detector: DetectorParams = DetectorParams()
    ins: InsConfig = InsConfig()
    slam: FootSlamConfig = FootSlamConfig()
    grid: tuple[float, float, int] = DEFAULT_GRID
    jobs: int = 1
    cut_low: float = 5.5
    cut_high: float = 7.5
    classify_gamma: float = CLASSIFY_GAMMA
    extra: dict = field(default_factory=dict)


def _section(cls, d, name):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise UsageError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise UsageError(f"unknown keys in config section {name!r}: {', '.join(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config section {name!r}: {exc}") from None


def load_config(args) -> RunConfig:
    """Merge the optional config file with command-line overrides."""
    raw: dict = {}
    if getattr(args, "config", None):
        p = Path(args.config)
        if not p.is_file():
            raise UsageError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{p}: config must be a JSON object")

    seed = args.seed if args.seed is not None else raw.get("seed")
    if seed is None:
        raise UsageError("a seed is required (--seed or \"seed\" in the config file)")
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise UsageError(f"seed must be an integer, got {seed!r}") from None

    detector = _section(DetectorParams, raw.get("detector"), "detector")
    ins = _section(InsConfig, raw.get("ins"), "ins")

    slam_raw = dict(raw.get("footslam") or {})
    radius = slam_raw.pop("hex_radius", None)
    if args.hex_radius is not None:
        radius = args.hex_radius
    if args.particles is not None:
        slam_raw["N"] = args.particles
    if getattr(args, "alpha", None) is not None:
        slam_raw["alpha"] = args.alpha
    slam_raw["seed"] = seed
    try:
        if radius is not None:
            slam_raw["hex"] = HexGridConfig(float(radius))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    slam = _section(FootSlamConfig, slam_raw, "footslam")

    g = dict(zip(("min", "max", "size"), DEFAULT_GRID))
    g.update(raw.get("grid") or {})
    for key, flag in (("min", args.grid_min), ("max", args.grid_max), ("size", args.grid_size)):
        if flag is not None:
            g[key] = flag
    try:
        grid = (float(g["min"]), float(g["max"]), int(g["size"]))
        make_grid(*grid)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid threshold grid: {exc}") from None

    jobs = args.jobs if args.jobs is not None else int(raw.get("jobs", 1))
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    cls = raw.get("classifier") or {}
    return RunConfig(
        seed=seed,
        detector=detector,
        ins=ins,
        slam=slam,
        grid=grid,
        jobs=jobs,
        cut_low=float(cls.get("cut_low", 5.5)),
        cut_high=float(cls.get("cut_high", 7.5)),
        classify_gamma=float(cls.get("gamma", CLASSIFY_GAMMA)),
        extra=raw,
    )


def _need_file(path, what="input file") -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _gamma(args, cfg: RunConfig) -> float:
    g = args.gamma if args.gamma is not None else cfg.extra.get("gamma")
    if g is None:
        raise UsageError("a threshold is required (--gamma or \"gamma\" in the config file)")
    g = float(g)
    if not g > 0:
        raise UsageError("--gamma must be positive")
    return g


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, cfg: RunConfig) -> int:
    p = _need_file(args.scenario, "scenario file")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise UsageError(f"{p}: scenario must be a JSON object")
    d = dict(d)
    d["seed"] = cfg.seed
    noise = d.get("noise", "consumer")
    noise = {"preset": noise} if isinstance(noise, str) else dict(noise)
    noise["seed"] = cfg.seed
    d["noise"] = noise
    try:
        scen = scenario_from_dict(d)
    except ScenarioError as exc:
        raise UsageError(str(exc)) from None
    seq, gt = scen.generate()
    out = _out_dir(args.out_dir)
    imu_path, gt_path = out / f"{args.name}_imu.csv", out / f"{args.name}_truth.csv"
    write_imu_csv(seq, imu_path)
    write_ground_truth_csv(gt, gt_path)
    print(imu_path)
    print(gt_path)
    return 0


def cmd_odometry(args, cfg: RunConfig) -> int:
    seq = parse_imu_csv(_need_file(args.imu))
    gamma = _gamma(args, cfg)
    ins = replace(cfg.ins, smooth=True) if args.smooth else cfg.ins
    traj = run_zupt_ins(seq, gamma, cfg.detector, ins)
    steps = extract_odometry(traj)
    out = _out_dir(args.out_dir)
    traj.write_csv(out / "trajectory.csv")
    write_odometry_csv(steps, out / "odometry.csv")
    print(out / "trajectory.csv")
    print(out / "odometry.csv")
    print(f"strides: {len(steps)}")
    return 0


def cmd_slam(args, cfg: RunConfig) -> int:
    steps = read_odometry_csv(_need_file(args.odometry))
    if not steps:
        raise UsageError("odometry file has no steps")
    res = run_footslam(steps, cfg.slam)
    out = _out_dir(args.out_dir)
    write_map_csv(res.map, out / "map.csv")
    write_trajectory_csv(res.trajectory, out / "slam_trajectory.csv")
    with (out / "weights.csv").open("w") as fh:
        fh.write("k,S,neff,resampled\n")
        for k, r in enumerate(res.steps):
            fh.write(f"{k},{r.S!r},{r.neff!r},{int(r.resampled)}\n")
    trace = accumulate_likelihood(res.steps)
    print(out / "map.csv")
    print(out / "slam_trajectory.csv")
    print(f"log-likelihood: {trace.loglik!r} over {trace.steps} steps")
    return 0


def _calibration_inputs(path: Path):
    """``[(label, path)]`` from a CSV file or the calibration entries of a manifest."""
    if path.suffix.lower() == ".json":
        entries = [e for e in read_manifest(path) if e.role == "calibration"]
        if not entries:
            raise UsageError(f"{path}: manifest has no calibration recordings")
        return [(e.label, Path(e.path), e.fs) for e in entries]
    return [(path.stem, path, None)]


def cmd_calibrate(args, cfg: RunConfig) -> int:
    src = _need_file(args.data, "data file or manifest")
    inputs = _calibration_inputs(src)
    labels = [lab for lab, _, _ in inputs]
    if len(set(labels)) != len(labels):
        raise UsageError("calibrate takes one calibration recording per label")
    grid = make_grid(*cfg.grid)
    out = _out_dir(args.out_dir)
    chosen = {}
    for label, path, fs in inputs:
        seq = parse_imu_csv(_need_file(path, "recording"), fs=fs)
        report = calibrate(seq, grid, cfg.detector, cfg.ins, cfg.slam, jobs=cfg.jobs)
        report.meta["recording"] = path.name
        rpath = out / f"calibration_{safe_name(label)}.json"
        report.write(rpath)
        chosen[label] = report.chosen_gamma
        print(f"[{label}] {path.name}")
        print(report.table())
        print(f"chosen gamma: {report.chosen_gamma!r}")
        if report.tie_note:
            print(f"tie: {report.tie_note}")
        print(rpath)
    tpath = out / "thresholds.json"
    tpath.write_text(json.dumps(chosen, indent=2, sort_keys=True) + "\n")
    print(tpath)
    return 0


METHODS = ("adaptive", "benchmark", "fixed")


def _read_thresholds(path) -> dict[str, float]:
    p = _need_file(path, "thresholds file")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(d, dict) or not d:
        raise UsageError(f"{p}: thresholds must be a non-empty object label -> gamma")
    try:
        return {str(k): float(v) for k, v in d.items()}
    except (TypeError, ValueError):
        raise UsageError(f"{p}: thresholds must be numbers") from None


def cmd_evaluate(args, cfg: RunConfig) -> int:
    entries = [e for e in read_manifest(_need_file(args.manifest, "manifest")) if e.role == "evaluation"]
    if not entries:
        raise UsageError("manifest has no evaluation recordings")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"--methods takes a comma list of {', '.join(METHODS)}")
    thresholds = _read_thresholds(args.thresholds)
    bench = _read_thresholds(args.benchmark_thresholds) if args.benchmark_thresholds else None
    missing = sorted({e.label for e in entries} - set(thresholds))
    if missing:
        raise UsageError(f"no threshold for labels: {', '.join(missing)}")
    if "benchmark" in methods:
        need = {"walk", "fast-walk", "jog"} - set(bench or thresholds)
        if need:
            raise UsageError(f"benchmark needs thresholds for {', '.join(sorted(need))}")
    fixed = list(make_grid(*cfg.grid)) if "fixed" in methods else []
    recordings = []
    for e in entries:
        recordings.append((Path(e.path).stem, e.label, parse_imu_csv(_need_file(e.path, "recording"), fs=e.fs)))
    rows = benchmark_fixed_and_classified(
        recordings, thresholds, fixed, bench, cfg.detector, cfg.ins, cfg.cut_low, cfg.cut_high, cfg.classify_gamma
    )
    keep = [r for r in rows if r.method.split(":")[0] in methods]
    results = [r.to_result() for r in keep]
    out = _out_dir(args.out_dir)
    write_results_csv(results, out / "results.csv")
    for method, rs in sorted(group_by_method(results).items()):
        write_ecdf_csv(ecdf(r.error_m for r in rs), out / f"ecdf_{safe_name(method)}.csv")
    summary = summarize(results)
    summary["classes"] = {r.recording: r.label for r in keep if r.method == "adaptive"} or None
    write_summary_json(summary, out / "summary.json")
    for m, v in summary["methods"].items():
        print(f"{m:>20}  rmse {v['rmse_m']:.4f} m  merged {v['merged_error_m']:.4f} m  n={v['recordings']}")
    print(out / "results.csv")
    print(out / "summary.json")
    return 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file (base layer)")
    common.add_argument("--seed", type=int, help="master seed (required here or in the config)")
    common.add_argument("--grid-min", type=float, help="smallest threshold in the grid")
    common.add_argument("--grid-max", type=float, help="largest threshold in the grid")
    common.add_argument("--grid-size", type=int, help="number of grid thresholds M")
    common.add_argument("--particles", type=int, help="FootSLAM particle count N")
    common.add_argument("--alpha", type=float, help="Dirichlet pseudo-count")
    common.add_argument("--hex-radius", type=float, help="hexagon circumradius, m")
    common.add_argument("--jobs", type=int, help="worker processes for the threshold sweep")

    p = _Parser(prog="adaptzupt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic IMU recording")
    s.add_argument("scenario", help="scenario JSON {trajectory, gait, noise, fs}")
    s.add_argument("--out-dir", default=".", help="output directory")
    s.add_argument("--name", default="sim", help="output file prefix")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("odometry", parents=[common], help="ZUPT-aided INS and stride odometry")
    s.add_argument("imu", help="IMU CSV")
    s.add_argument("--gamma", type=float, help="zero-velocity threshold")
    s.add_argument("--smooth", action="store_true", help="run the fixed-interval smoother")
    s.add_argument("--out-dir", default=".", help="output directory")
    s.set_defaults(func=cmd_odometry)

    s = sub.add_parser("slam", parents=[common], help="FootSLAM on an odometry CSV")
    s.add_argument("odometry", help="odometry CSV (dt,dx,dy,dpsi)")
    s.add_argument("--out-dir", default=".", help="output directory")
    s.set_defaults(func=cmd_slam)

    s = sub.add_parser("calibrate", parents=[common], help="maximum-likelihood threshold search")
    s.add_argument("data", help="IMU CSV or manifest JSON (calibration entries, one per label)")
    s.add_argument("--out-dir", default=".", help="output directory")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("evaluate", parents=[common], help="compare adaptive, benchmark and fixed thresholds")
    s.add_argument("manifest", help="manifest JSON (evaluation entries are used)")
    s.add_argument("--thresholds", required=True, help="JSON object label -> gamma (from calibrate)")
    s.add_argument("--benchmark-thresholds", help="JSON object walk/fast-walk/jog -> gamma for the speed classifier")
    s.add_argument("--methods", default="adaptive,benchmark,fixed", help="comma list of adaptive,benchmark,fixed")
    s.add_argument("--out-dir", default=".", help="output directory")
    s.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"adaptzupt: error: {exc}", file=sys.stderr)
        return 2
    except ImuFormatError as exc:
        print(f"adaptzupt: error: {exc}", file=sys.stderr)
        return 2
    except (InsError, CalibrationError, ParticleDepletion, ScenarioError, ValueError, RuntimeError, OSError) as exc:
        print(f"adaptzupt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
