"""Pointy-top hexagonal tessellation in axial coordinates.

A hexagon ``(q, r)`` with circumradius ``s`` is centred at
``(s*sqrt(3)*(q + r/2), s*1.5*r)``. Every query point is nudged by
``+1e-9*s`` along both axes before it is located, so points on a cell
boundary are assigned deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

SQRT3 = math.sqrt(3.0)
TIE_NUDGE = 1e-9


class HexCoord(NamedTuple):
    q: int
    r: int


EdgeKey = tuple[HexCoord, HexCoord]

# axial offsets of the six neighbours
DIRECTIONS = ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))


@dataclass(frozen=True)
class HexGridConfig:
    radius: float = 0.5
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("hexagon radius must be positive")


def _round_axial(qf: float, rf: float) -> HexCoord:
    # cube rounding: fix the component with the largest rounding error
    xf, zf = qf, rf
    yf = -xf - zf
    rx, ry, rz = round(xf), round(yf), round(zf)
    dx, dy, dz = abs(rx - xf), abs(ry - yf), abs(rz - zf)
    if dx > dy and dx > dz:
        rx = -ry - rz
    elif dy <= dz:
        rz = -rx - ry
    return HexCoord(int(rx), int(rz))


def _locate(x: float, y: float, s: float) -> HexCoord:
    """Hexagon of an already-nudged, origin-relative point."""
    qf = (SQRT3 / 3.0 * x - y / 3.0) / s
    rf = (2.0 / 3.0 * y) / s
    return _round_axial(qf, rf)


def point_to_hex(xy, cfg: HexGridConfig = HexGridConfig()) -> HexCoord:
    s = cfg.radius
    eps = TIE_NUDGE * s
    return _locate(xy[0] - cfg.origin[0] + eps, xy[1] - cfg.origin[1] + eps, s)


def hex_center(h, cfg: HexGridConfig = HexGridConfig()) -> tuple[float, float]:
    q, r = h
    s = cfg.radius
    return (cfg.origin[0] + s * SQRT3 * (q + 0.5 * r), cfg.origin[1] + s * 1.5 * r)


def lattice_vector(dq: int, dr: int, cfg: HexGridConfig = HexGridConfig()) -> tuple[float, float]:
    """Planar translation that maps hexagon (q, r) onto (q+dq, r+dr)."""
    s = cfg.radius
    return (s * SQRT3 * (dq + 0.5 * dr), s * 1.5 * dr)


def neighbors(h) -> list[HexCoord]:
    q, r = h
    return [HexCoord(q + dq, r + dr) for dq, dr in DIRECTIONS]


def edge_key(a, b) -> EdgeKey:
    a, b = HexCoord(*a), HexCoord(*b)
    return (a, b) if a <= b else (b, a)


def are_adjacent(a, b) -> bool:
    return (b[0] - a[0], b[1] - a[1]) in DIRECTIONS


def traverse(a, b, cfg: HexGridConfig = HexGridConfig()) -> list[HexCoord]:
    """Hexagons visited by the segment a->b, in order, starting with a's hexagon.

    Walks cell to cell: inside hexagon h the segment leaves through the
    bisector with the neighbour whose crossing parameter is the smallest
    one ahead of the current position.
    """
    s = cfg.radius
    eps = TIE_NUDGE * s
    ax = a[0] - cfg.origin[0] + eps
    ay = a[1] - cfg.origin[1] + eps
    bx = b[0] - cfg.origin[0] + eps
    by = b[1] - cfg.origin[1] + eps
    h = _locate(ax, ay, s)
    end = _locate(bx, by, s)
    path = [h]
    if h == end:
        return path
    dx, dy = bx - ax, by - ay
    # neighbour centre offsets are fixed; |c|^2 / 2 = 1.5 s^2
    offsets = [(s * SQRT3 * (dq + 0.5 * dr), s * 1.5 * dr) for dq, dr in DIRECTIONS]
    half = 1.5 * s * s
    t_cur = 0.0
    limit = 4 + int(4.0 * math.hypot(dx, dy) / s)
    for _ in range(limit):
        cx = s * SQRT3 * (h[0] + 0.5 * h[1])
        cy = s * 1.5 * h[1]
        rx, ry = ax - cx, ay - cy
        best_t = math.inf
        best = []
        for k, (ox, oy) in enumerate(offsets):
            den = dx * ox + dy * oy
            if den <= 0.0:
                continue
            tk = (half - (rx * ox + ry * oy)) / den
            if tk < best_t - 1e-12:
                best_t = tk
                best = [k]
            elif abs(tk - best_t) <= 1e-12:
                best.append(k)
        if not best:
            break
        if len(best) == 1:
            k = best[0]
        else:
            # segment passes through a vertex: take the cell just beyond it
            tt = min(best_t + 1e-9, 1.0)
            px, py = ax + tt * dx, ay + tt * dy
            k = min(
                best,
                key=lambda j: (px - cx - offsets[j][0]) ** 2 + (py - cy - offsets[j][1]) ** 2,
            )
        t_cur = max(t_cur, best_t)
        dq, dr = DIRECTIONS[k]
        h = HexCoord(h[0] + dq, h[1] + dr)
        path.append(h)
        if h == end:
            return path
    raise RuntimeError(f"hexagon traversal from {a} to {b} did not reach {end}")


def crossings(a, b, cfg: HexGridConfig = HexGridConfig()) -> list[EdgeKey]:
    """Undirected hexagon-boundary crossings along a->b, in traversal order."""
    path = traverse(a, b, cfg)
    return [edge_key(u, v) for u, v in zip(path[:-1], path[1:])]
