"""IMU sequence container plus CSV / manifest readers and writers.

CSV layout is one record per row under the header ``t,fx,fy,fz,wx,wy,wz``
in SI units (s, m/s^2, rad/s).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

CSV_HEADER = ["t", "fx", "fy", "fz", "wx", "wy", "wz"]

GRAVITY = 9.81
SATURATION_ACC = 16.0 * GRAVITY
SATURATION_GYRO = math.radians(2000.0)


class ImuFormatError(ValueError):
    """Raised when an IMU file or array violates the sequence contract."""


class ImuRecord(NamedTuple):
    t: float
    f: np.ndarray
    w: np.ndarray


@dataclass(frozen=True, eq=False)
class ImuSequence:
    """Timestamped specific force and angular rate samples.

    Stored column-wise: ``t`` has shape (n,), ``f`` and ``w`` shape (n, 3).
    """

    t: np.ndarray
    f: np.ndarray
    w: np.ndarray
    fs: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=float)
        f = np.ascontiguousarray(self.f, dtype=float)
        w = np.ascontiguousarray(self.w, dtype=float)
        if t.ndim != 1 or f.shape != (t.size, 3) or w.shape != (t.size, 3):
            raise ImuFormatError("t must be (n,), f and w (n, 3)")
        if t.size < 2:
            raise ImuFormatError("an IMU sequence needs at least 2 records")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(f)) and np.all(np.isfinite(w))):
            raise ImuFormatError("non-finite IMU values")
        if np.any(np.diff(t) <= 0):
            k = int(np.argmax(np.diff(t) <= 0))
            raise ImuFormatError(f"timestamps not strictly increasing at record {k + 1}")
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise ImuFormatError("fs must be positive")
        for arr in (t, f, w):
            arr.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "fs", float(self.fs))

    @classmethod
    def from_arrays(cls, t, f, w, fs=None) -> "ImuSequence":
        t = np.asarray(t, dtype=float)
        if fs is None:
            fs = infer_fs(t)
        return cls(t, f, w, fs)

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, k: int) -> ImuRecord:
        return ImuRecord(float(self.t[k]), self.f[k], self.w[k])

    def __iter__(self) -> Iterator[ImuRecord]:
        for k in range(len(self)):
            yield self[k]

    @property
    def records(self) -> list[ImuRecord]:
        return list(self)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def gap_indices(self) -> np.ndarray:
        """Indices k where t[k+1]-t[k] deviates from 1/fs by at least half a period."""
        dt = np.diff(self.t)
        return np.flatnonzero(np.abs(dt - 1.0 / self.fs) >= 0.5 / self.fs)

    def slice(self, start: int, stop: int) -> "ImuSequence":
        return ImuSequence(self.t[start:stop], self.f[start:stop], self.w[start:stop], self.fs)

    def equals(self, other: "ImuSequence") -> bool:
        return (
            self.fs == other.fs
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.f, other.f)
            and np.array_equal(self.w, other.w)
        )


def infer_fs(t) -> float:
    dt = float(np.median(np.diff(np.asarray(t, dtype=float))))
    if not dt > 0:
        raise ImuFormatError("cannot infer sampling rate from timestamps")
    # snap away float noise from timestamps like k * 0.01
    return round(1.0 / dt, 6)


def parse_imu_csv(path, fs: float | None = None, allow_gaps: bool = False) -> ImuSequence:
    """Read an IMU CSV file.

    ``fs`` overrides the rate inferred from the median time step. Sequences
    with dropped-sample gaps are rejected unless ``allow_gaps`` is set.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ImuFormatError(f"{path}: header must be {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ImuFormatError(f"{path}:{lineno}: expected 7 fields, got {len(row)}")
            try:
                vals = [float(x) for x in row]
            except ValueError as exc:
                raise ImuFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ImuFormatError(f"{path}:{lineno}: non-finite value")
            if rows and vals[0] <= rows[-1][0]:
                raise ImuFormatError(f"{path}:{lineno}: non-monotone timestamp {row[0]}")
            rows.append(vals)
    if len(rows) < 2:
        raise ImuFormatError(f"{path}: fewer than 2 records")
    data = np.array(rows)
    seq = ImuSequence.from_arrays(data[:, 0], data[:, 1:4], data[:, 4:7], fs)
    gaps = seq.gap_indices()
    if gaps.size and not allow_gaps:
        k = int(gaps[0])
        raise ImuFormatError(
            f"{path}: sampling gap between t={seq.t[k]!r} and t={seq.t[k + 1]!r}"
        )
    return seq


def write_imu_csv(seq: ImuSequence, path) -> None:
    # repr() gives the shortest string that round-trips a float exactly
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        data = np.column_stack([seq.t, seq.f, seq.w]).tolist()
        writer.writerows([repr(v) for v in row] for row in data)


def validate_sequence(seq: ImuSequence) -> list[str]:
    """Return human-readable warnings; an empty list means nothing suspicious."""
    warnings = []
    for k in seq.gap_indices():
        warnings.append(
            f"gap: {seq.t[k + 1] - seq.t[k]:.4f} s between t={seq.t[k]:.4f} and t={seq.t[k + 1]:.4f}"
        )
    fnorm = np.linalg.norm(seq.f, axis=1)
    wnorm = np.linalg.norm(seq.w, axis=1)
    n_sat_f = int(np.count_nonzero(fnorm > SATURATION_ACC))
    n_sat_w = int(np.count_nonzero(wnorm > SATURATION_GYRO))
    if n_sat_f:
        warnings.append(f"saturation: {n_sat_f} accelerometer samples exceed 16 g")
    if n_sat_w:
        warnings.append(f"saturation: {n_sat_w} gyroscope samples exceed 2000 deg/s")
    for name, col in zip(CSV_HEADER[1:], np.column_stack([seq.f, seq.w]).T):
        if np.ptp(col) == 0.0:
            warnings.append(f"constant channel: {name} = {col[0]!r}")
    return warnings


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    role: str
    fs: float | None = None


def read_manifest(path) -> list[ManifestEntry]:
    """Load a JSON array of ``{path, label, role[, fs]}`` objects.

    Relative recording paths are resolved against the manifest's directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ImuFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, list):
        raise ImuFormatError(f"{path}: manifest must be a JSON array")
    entries = []
    seen = set()
    for i, item in enumerate(raw):
        try:
            rec_path = str(item["path"])
            label = str(item["label"])
            role = str(item["role"])
        except (KeyError, TypeError):
            raise ImuFormatError(f"{path}: entry {i} needs path, label and role") from None
        if role not in ("calibration", "evaluation"):
            raise ImuFormatError(f"{path}: entry {i} has unknown role {role!r}")
        full = Path(rec_path)
        if not full.is_absolute():
            full = path.parent / full
        key = str(full.resolve())
        if key in seen:
            raise ImuFormatError(f"{path}: duplicate recording path {rec_path}")
        seen.add(key)
        fs = item.get("fs")
        entries.append(ManifestEntry(str(full), label, role, None if fs is None else float(fs)))
    return entries


def write_manifest(entries, path) -> None:
    path = Path(path)
    out = []
    for e in entries:
        d = {"path": e.path, "label": e.label, "role": e.role}
        if e.fs is not None:
            d["fs"] = e.fs
        out.append(d)
    path.write_text(json.dumps(out, indent=2) + "\n")
