"""Loop-closure metrics, ECDFs and result files.

All errors are horizontal: the x-y plane of the navigation frame.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class RecordingResult:
    recording: str
    method: str
    error_m: float
    length_m: float
    closure: tuple[float, float] = (math.nan, math.nan)  # end minus start, m

    def __post_init__(self):
        if not self.error_m >= 0:
            raise ValueError(f"error must be >= 0, got {self.error_m!r}")


@dataclass(frozen=True)
class EcdfCurve:
    errors: np.ndarray
    prob: np.ndarray

    def __len__(self) -> int:
        return self.errors.size

    def quantile(self, q: float) -> float:
        """Smallest error whose cumulative probability reaches ``q``."""
        if not 0.0 < q <= 1.0:
            raise ValueError("q must lie in (0, 1]")
        i = int(np.searchsorted(self.prob, q - 1e-12, side="left"))
        return float(self.errors[min(i, len(self) - 1)])

    @property
    def median(self) -> float:
        return self.quantile(0.5)


def closure_vector(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=float)
    if p.ndim != 2 or p.shape[0] == 0 or p.shape[1] < 2:
        raise ValueError("need a non-empty (n, >=2) position array")
    return p[-1, :2] - p[0, :2]


def loop_closure_error(traj) -> float:
    """Horizontal distance between the first and last position.

    ``traj`` is a NavTrajectory-like object with a ``p`` array or the
    position array itself.
    """
    d = closure_vector(getattr(traj, "p", traj))
    return float(math.hypot(d[0], d[1]))


def path_length(traj) -> float:
    p = np.asarray(getattr(traj, "p", traj), dtype=float)
    return float(np.sum(np.hypot(*np.diff(p[:, :2], axis=0).T))) if len(p) > 1 else 0.0


def rmse(errors: Iterable[float]) -> float:
    e = np.asarray(list(errors), dtype=float)
    if e.size == 0:
        raise ValueError("rmse of an empty list")
    # scale by the largest magnitude so squaring neither underflows nor overflows
    m = float(np.max(np.abs(e)))
    if m == 0.0 or not math.isfinite(m):
        return m
    s = e / m
    return m * math.sqrt(math.fsum((s * s).tolist()) / e.size)


def ecdf(errors: Iterable[float]) -> EcdfCurve:
    e = np.sort(np.asarray(list(errors), dtype=float))
    if e.size == 0:
        raise ValueError("ecdf of an empty list")
    return EcdfCurve(e, np.arange(1, e.size + 1) / e.size)


def merged_trajectory_error(closures: Iterable) -> float:
    """Norm of the summed closure vectors, as if the recordings were walked back to back."""
    c = [tuple(v)[:2] for v in closures]
    if not c:
        raise ValueError("no closure vectors to merge")
    sx = math.fsum(v[0] for v in c)
    sy = math.fsum(v[1] for v in c)
    return math.hypot(sx, sy)


def group_by_method(results: Iterable[RecordingResult]) -> dict[str, list[RecordingResult]]:
    out: dict[str, list[RecordingResult]] = defaultdict(list)
    for r in results:
        out[r.method].append(r)
    return dict(out)


def summarize(results: Sequence[RecordingResult]) -> dict:
    """Per-method RMSE, merged error and total length, plus the best fixed method."""
    groups = group_by_method(results)
    if not groups:
        raise ValueError("no results to summarize")
    methods = {}
    for m in sorted(groups):
        rs = groups[m]
        methods[m] = {
            "recordings": len(rs),
            "rmse_m": rmse(r.error_m for r in rs),
            "merged_error_m": merged_trajectory_error(r.closure for r in rs),
            "total_length_m": math.fsum(r.length_m for r in rs),
        }
    fixed = {m: v for m, v in methods.items() if m.startswith("fixed:")}
    summary = {"methods": methods}
    if fixed:
        summary["best_fixed_by_merged_error"] = min(fixed, key=lambda m: (fixed[m]["merged_error_m"], m))
        summary["best_fixed_by_rmse"] = min(fixed, key=lambda m: (fixed[m]["rmse_m"], m))
    return summary


def write_results_csv(results: Iterable[RecordingResult], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recording", "method", "error_m", "length_m"])
        for r in results:
            w.writerow([r.recording, r.method, repr(float(r.error_m)), repr(float(r.length_m))])


def read_results_csv(path) -> list[RecordingResult]:
    with Path(path).open(newline="") as fh:
        return [
            RecordingResult(row["recording"], row["method"], float(row["error_m"]), float(row["length_m"]))
            for row in csv.DictReader(fh)
        ]


def write_ecdf_csv(curve: EcdfCurve, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["error_m", "prob"])
        for e, p in zip(curve.errors.tolist(), curve.prob.tolist()):
            w.writerow([repr(e), repr(p)])


def write_summary_json(summary: Mapping, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def safe_name(method: str) -> str:
    """File-name friendly form of a method label (``fixed:100`` -> ``fixed_100``)."""
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in method)


__all__ = [
    "EcdfCurve",
    "RecordingResult",
    "closure_vector",
    "ecdf",
    "group_by_method",
    "loop_closure_error",
    "merged_trajectory_error",
    "path_length",
    "read_results_csv",
    "rmse",
    "safe_name",
    "summarize",
    "write_ecdf_csv",
    "write_results_csv",
    "write_summary_json",
]
