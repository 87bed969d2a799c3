"""Rao-Blackwellized particle filter over odometry with hexagon transition maps.

Each particle carries a planar pose, a yaw-rate bias and a map of undirected
hexagon-edge traversal counts. Poses are sampled from the odometry model
(bootstrap proposal); the weight update multiplies by the probability of the
sampled transition under the particle's own map, marginalized over a
symmetric Dirichlet prior on each hexagon's six exits.

The filter keeps its particles in flat arrays: ``counts[i, e]`` is the count
of edge ``e`` in particle ``i``'s map and ``exits[i, h]`` the summed count of
the six edges around hexagon ``h``. Edge and hexagon ids are assigned in
first-seen order and shared by all particles of one run.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._so3 import wrap_angle
from .hexgrid import EdgeKey, HexCoord, HexGridConfig, edge_key, traverse
from .zupt_ins import OdometryStep


class ParticleDepletion(RuntimeError):
    """Every particle received zero transition probability."""

    def __init__(self, step: int):
        super().__init__(f"particle depletion at step {step}: all transition probabilities are zero")
        self.step = step


class Pose(NamedTuple):
    x: float
    y: float
    psi: float


class MapCounts:
    """Undirected edge counts with per-hexagon exit totals.

    >>> m = MapCounts()
    >>> m.add(((0, 0), (1, 0)))
    >>> m[((0, 0), (1, 0))], m.exit_total((0, 0))
    (1, 1)
    """

    def __init__(self, counts: dict | None = None):
        self._c: dict[EdgeKey, int] = {}
        self._tot: dict[HexCoord, int] = {}
        for e, c in (counts or {}).items():
            self.add(e, int(c))

    def __getitem__(self, e) -> int:
        return self._c.get(edge_key(*e), 0)

    def __len__(self) -> int:
        return len(self._c)

    def __eq__(self, other) -> bool:
        return isinstance(other, MapCounts) and self._c == other._c

    def items(self):
        return sorted(self._c.items())

    def total(self) -> int:
        return sum(self._c.values())

    def exit_total(self, h) -> int:
        return self._tot.get(HexCoord(*h), 0)

    def add(self, e, n: int = 1) -> None:
        if n < 0:
            raise ValueError("counts only increase")
        a, b = edge_key(*e)
        self._c[(a, b)] = self._c.get((a, b), 0) + n
        self._tot[a] = self._tot.get(a, 0) + n
        self._tot[b] = self._tot.get(b, 0) + n

    def copy(self) -> "MapCounts":
        m = MapCounts()
        m._c = dict(self._c)
        m._tot = dict(self._tot)
        return m


@dataclass
class Particle:
    pose: Pose
    bias: float = 0.0
    map: MapCounts = field(default_factory=MapCounts)
    weight: float = 1.0
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class FootSlamConfig:
    N: int = 500
    alpha: float = 0.8
    sigma_d: float = 0.05
    sigma_psi: float = 0.02
    sigma_bias: float = 1e-4
    hex: HexGridConfig = HexGridConfig()
    resample_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if min(self.sigma_d, self.sigma_psi, self.sigma_bias) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if not 0 < self.resample_ratio <= 1:
            raise ValueError("resample_ratio must lie in (0, 1]")


class StepResult(NamedTuple):
    S: float
    neff: float
    resampled: bool


def step_noise(cfg: FootSlamConfig, k: int) -> tuple[np.ndarray, np.random.Generator]:
    """Standard-normal draws for step ``k``: row i belongs to particle i.

    The generator is seeded by ``(seed, k)`` so every step, and every row
    within it, is reproducible without reference to what ran before.
    The returned generator is used afterwards for the resampling offset.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, k])))
    return rng.standard_normal((cfg.N, 4)), rng


def propose(p: Particle, z: OdometryStep, cfg: FootSlamConfig, rng=None, noise=None) -> tuple[Pose, float]:
    """Sample a successor pose and bias for one particle.

    ``noise`` is a length-4 standard-normal vector (displacement x, y,
    heading, bias); when omitted it is drawn from ``rng``.
    Returns ``(pose, bias)``.
    """
    if noise is None:
        noise = rng.standard_normal(4)
    x, y, psi = p.pose
    dx = z.d[0] + cfg.sigma_d * noise[0]
    dy = z.d[1] + cfg.sigma_d * noise[1]
    c, s = math.cos(psi), math.sin(psi)
    psi_new = psi + z.dpsi - p.bias * z.dt + cfg.sigma_psi * noise[2]
    pose = Pose(x + c * dx - s * dy, y + s * dx + c * dy, wrap_angle(psi_new))
    return pose, p.bias + cfg.sigma_bias * noise[3]


def transition_probability(m: MapCounts, old, new, cfg: FootSlamConfig) -> float:
    """Probability of the hexagon path old->new under map ``m``.

    Crossings are scored in order; a multi-crossing step sees the counts
    left by its own earlier crossings. ``m`` itself is not modified.
    """
    path = traverse(old[:2], new[:2], cfg.hex)
    if len(path) == 1:
        return 1.0
    work = m.copy()
    p = 1.0
    a = cfg.alpha
    for h0, h1 in zip(path[:-1], path[1:]):
        e = edge_key(h0, h1)
        p *= (work[e] + a) / (work.exit_total(h0) + 6.0 * a)
        work.add(e)
    return p


def systematic_resample(weights, rng) -> np.ndarray:
    """Indices drawn with one uniform offset and stride 1/N."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be normalized")
    u0 = rng.random()
    positions = (u0 + np.arange(n)) / n
    cum = np.cumsum(w)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, positions, side="right")
    return np.minimum(idx, n - 1)


class FootSlamFilter:
    """Array-backed particle set; see the module docstring for the layout."""

    def __init__(self, cfg: FootSlamConfig, initial_pose=(0.0, 0.0, 0.0)):
        self.cfg = cfg
        N = cfg.N
        self.xy = np.tile(np.asarray(initial_pose[:2], dtype=float), (N, 1))
        self.psi = np.full(N, wrap_angle(float(initial_pose[2])))
        self.bias = np.zeros(N)
        self.w = np.full(N, 1.0 / N)
        self.k = 0
        self._edge_id: dict[EdgeKey, int] = {}
        self._edges: list[EdgeKey] = []
        self._hex_id: dict[HexCoord, int] = {}
        self.counts = np.zeros((N, 16), dtype=np.int64)
        self.exits = np.zeros((N, 16), dtype=np.int64)
        self.last_indices: np.ndarray | None = None  # ancestors chosen by the latest resampling
        self._estimate = self.estimate()

    # id bookkeeping -------------------------------------------------------
    def _hid(self, h: HexCoord) -> int:
        i = self._hex_id.get(h)
        if i is None:
            i = self._hex_id[h] = len(self._hex_id)
            if i >= self.exits.shape[1]:
                self.exits = np.concatenate([self.exits, np.zeros_like(self.exits)], axis=1)
        return i

    def _eid(self, e: EdgeKey) -> int:
        i = self._edge_id.get(e)
        if i is None:
            i = self._edge_id[e] = len(self._edges)
            self._edges.append(e)
            if i >= self.counts.shape[1]:
                self.counts = np.concatenate([self.counts, np.zeros_like(self.counts)], axis=1)
        return i

    def load_map(self, i: int, m: MapCounts) -> None:
        """Replace particle ``i``'s map with the counts of ``m``."""
        self.counts[i] = 0
        self.exits[i] = 0
        for e, c in m.items():
            if c:
                self.counts[i, self._eid(e)] += c
                self.exits[i, self._hid(e[0])] += c
                self.exits[i, self._hid(e[1])] += c

    # filtering ------------------------------------------------------------
    def step(self, z: OdometryStep) -> StepResult:
        cfg = self.cfg
        N = cfg.N
        noise, rng = step_noise(cfg, self.k)
        dx = z.d[0] + cfg.sigma_d * noise[:, 0]
        dy = z.d[1] + cfg.sigma_d * noise[:, 1]
        c, s = np.cos(self.psi), np.sin(self.psi)
        new_xy = np.column_stack([self.xy[:, 0] + c * dx - s * dy, self.xy[:, 1] + s * dx + c * dy])
        new_psi = wrap_angle(self.psi + z.dpsi - self.bias * z.dt + cfg.sigma_psi * noise[:, 2])
        new_bias = self.bias + cfg.sigma_bias * noise[:, 3]

        # hexagon paths, grouped by crossing rank so the sequential
        # within-step update can be vectorized across particles
        ranks: list[tuple[list, list, list, list]] = []
        old_l = self.xy.tolist()
        new_l = new_xy.tolist()
        for i in range(N):
            path = traverse(old_l[i], new_l[i], cfg.hex)
            for j in range(len(path) - 1):
                if j == len(ranks):
                    ranks.append(([], [], [], []))
                h0, h1 = path[j], path[j + 1]
                r = ranks[j]
                r[0].append(i)
                r[1].append(self._eid(edge_key(h0, h1)))
                r[2].append(self._hid(h0))
                r[3].append(self._hid(h1))
        p = np.ones(N)
        a = cfg.alpha
        for who, e, h0, h1 in ranks:
            who = np.asarray(who)
            e = np.asarray(e)
            h0 = np.asarray(h0)
            h1 = np.asarray(h1)
            p[who] *= (self.counts[who, e] + a) / (self.exits[who, h0] + 6.0 * a)
            self.counts[who, e] += 1
            self.exits[who, h0] += 1
            self.exits[who, h1] += 1

        u = p * self.w
        S = math.fsum(u.tolist())
        if not S > 0.0:
            raise ParticleDepletion(self.k)
        self.w = u / S
        self.xy, self.psi, self.bias = new_xy, new_psi, new_bias
        neff = 1.0 / float(np.dot(self.w, self.w))
        resampled = neff < cfg.resample_ratio * N
        self.k += 1
        self._estimate = self.estimate()
        self.last_indices = None
        if resampled:
            idx = systematic_resample(self.w, rng)
            self.last_indices = idx
            self.xy = self.xy[idx]
            self.psi = self.psi[idx]
            self.bias = self.bias[idx]
            self.counts = self.counts[idx]
            self.exits = self.exits[idx]
            self.w = np.full(N, 1.0 / N)
        return StepResult(S, neff, bool(resampled))

    def estimate(self) -> Pose:
        """Weighted mean position with circular mean heading."""
        x, y = self.w @ self.xy
        psi = math.atan2(float(self.w @ np.sin(self.psi)), float(self.w @ np.cos(self.psi)))
        return Pose(float(x), float(y), wrap_angle(psi))

    def particle_map(self, i: int) -> MapCounts:
        row = self.counts[i]
        return MapCounts({self._edges[e]: int(row[e]) for e in np.flatnonzero(row[: len(self._edges)])})

    def particles(self) -> list[Particle]:
        return [
            Particle(Pose(*self.xy[i], self.psi[i]), float(self.bias[i]), self.particle_map(i), float(self.w[i]))
            for i in range(self.cfg.N)
        ]

    def best_map(self) -> MapCounts:
        return self.particle_map(int(np.argmax(self.w)))


@dataclass
class FootSlamResult:
    trajectory: np.ndarray  # (T+1, 3): x, y, psi; row 0 is the initial pose
    map: MapCounts
    steps: list[StepResult]

    @property
    def S(self) -> np.ndarray:
        return np.array([r.S for r in self.steps])


def run_footslam(odometry, cfg: FootSlamConfig = FootSlamConfig(), initial_pose=(0.0, 0.0, 0.0)) -> FootSlamResult:
    """Filter a whole odometry sequence; trajectory rows are weighted-mean poses."""
    odometry = list(odometry)
    if not odometry:
        raise ValueError("odometry is empty")
    pf = FootSlamFilter(cfg, initial_pose)
    traj = [pf.estimate()]
    results = []
    for z in odometry:
        results.append(pf.step(z))
        traj.append(pf._estimate)
    return FootSlamResult(np.array(traj, dtype=float), pf.best_map(), results)


def write_map_csv(m: MapCounts, path) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["q1", "r1", "q2", "r2", "count"])
        for (a, b), c in m.items():
            wr.writerow([a.q, a.r, b.q, b.r, c])


def read_map_csv(path) -> MapCounts:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return MapCounts(
        {((int(r["q1"]), int(r["r1"])), (int(r["q2"]), int(r["r2"]))): int(r["count"]) for r in rows}
    )


def write_trajectory_csv(traj: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["k", "x", "y", "psi"])
        for k, (x, y, psi) in enumerate(np.asarray(traj).tolist()):
            wr.writerow([k, repr(x), repr(y), repr(psi)])


__all__ = [
    "FootSlamConfig",
    "FootSlamFilter",
    "FootSlamResult",
    "MapCounts",
    "Particle",
    "ParticleDepletion",
    "Pose",
    "StepResult",
    "propose",
    "read_map_csv",
    "run_footslam",
    "step_noise",
    "systematic_resample",
    "transition_probability",
    "write_map_csv",
    "write_trajectory_csv",
]
