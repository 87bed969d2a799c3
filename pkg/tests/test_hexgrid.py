import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptzupt.hexgrid import (
    DIRECTIONS,
    HexCoord,
    HexGridConfig,
    are_adjacent,
    crossings,
    edge_key,
    hex_center,
    lattice_vector,
    neighbors,
    point_to_hex,
    traverse,
)
from oracles import dense_crossings, nearest_center

FROZEN = json.loads((Path(__file__).parent / "data" / "frozen_oracles.json").read_text())
RADII = (0.3, 0.5, 0.8)
coord = st.integers(-100, 100)
real = st.floats(-50, 50, allow_nan=False)


def test_origin_maps_to_zero():
    assert point_to_hex((0.0, 0.0)) == HexCoord(0, 0)


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        HexGridConfig(0.0)


def test_center_of_origin_hex():
    assert hex_center((0, 0)) == (0.0, 0.0)
    assert hex_center((0, 0), HexGridConfig(0.5, (1.0, -2.0))) == (1.0, -2.0)


def test_opposite_centers_symmetric():
    a = hex_center((1, 0))
    b = hex_center((-1, 0))
    assert a[0] == -b[0] and a[1] == -b[1]


@pytest.mark.parametrize("radius", RADII)
def test_neighbor_centers_at_sqrt3_radius(radius):
    cfg = HexGridConfig(radius)
    for h in [(0, 0), (7, -3), (-12, 40)]:
        c = hex_center(h, cfg)
        for n in neighbors(h):
            assert math.dist(c, hex_center(n, cfg)) == pytest.approx(math.sqrt(3) * radius, rel=1e-12)


def test_neighbors_of_origin():
    assert set(neighbors((0, 0))) == {(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)}


@given(coord, coord)
def test_neighbor_symmetry(q, r):
    h = HexCoord(q, r)
    for n in neighbors(h):
        assert h in neighbors(n)
        assert are_adjacent(h, n)


@pytest.mark.parametrize("radius", RADII)
def test_center_roundtrip_full_block(radius):
    cfg = HexGridConfig(radius, (0.37, -1.2))
    for q in range(-100, 101):
        for r in range(-100, 101):
            assert point_to_hex(hex_center((q, r), cfg), cfg) == (q, r)


@pytest.mark.parametrize("radius", RADII)
def test_point_to_hex_brute_force(radius):
    cfg = HexGridConfig(radius, (0.1, -0.2))
    rng = np.random.default_rng(int(radius * 10))
    pts = rng.uniform(-20, 20, (10_000, 2))
    ref = nearest_center(pts, radius, cfg.origin)
    got = np.array([point_to_hex(p, cfg) for p in pts.tolist()])
    assert np.array_equal(got, ref)


@settings(max_examples=200)
@given(real, real, st.integers(-20, 20), st.integers(-20, 20), st.sampled_from(RADII))
def test_lattice_translation(x, y, dq, dr, radius):
    cfg = HexGridConfig(radius)
    h = point_to_hex((x, y), cfg)
    tx, ty = lattice_vector(dq, dr, cfg)
    # translation is exact only up to rounding of x + tx; stay away from boundaries
    c = hex_center(h, cfg)
    if math.dist((x, y), c) > 0.99 * radius * math.sqrt(3) / 2:
        return
    assert point_to_hex((x + tx, y + ty), cfg) == (h[0] + dq, h[1] + dr)


def test_crossings_same_point_empty():
    assert crossings((0.3, 0.1), (0.3, 0.1)) == []


def test_crossings_adjacent_centers():
    cfg = HexGridConfig(0.5)
    for d in DIRECTIONS:
        assert crossings(hex_center((0, 0), cfg), hex_center(d, cfg), cfg) == [edge_key((0, 0), d)]


def test_crossings_same_cell_empty():
    assert crossings((0.01, 0.02), (0.05, -0.03)) == []


def test_edge_key_canonical():
    assert edge_key((1, 0), (0, 0)) == ((0, 0), (1, 0))
    assert edge_key((0, 0), (1, 0)) == edge_key((1, 0), (0, 0))


def test_crossings_match_frozen_oracle():
    for seg in FROZEN["hex_segments"]:
        got = crossings(seg["a"], seg["b"], HexGridConfig(seg["radius"]))
        want = [(tuple(u), tuple(v)) for u, v in seg["crossings"]]
        assert got == want


@pytest.mark.parametrize("radius", RADII)
def test_crossings_dense_sampling_oracle(radius):
    cfg = HexGridConfig(radius, (0.1, -0.2))
    rng = np.random.default_rng(100 + int(radius * 10))
    for _ in range(200):
        a = rng.uniform(-5, 5, 2)
        ang = rng.uniform(0, 2 * math.pi)
        b = a + rng.uniform(0, 10 * radius) * np.array([math.cos(ang), math.sin(ang)])
        assert crossings(a, b, cfg) == dense_crossings(a, b, radius, cfg.origin)


@settings(max_examples=300)
@given(real, real, real, real, st.sampled_from(RADII))
def test_crossings_reverse_symmetry(ax, ay, bx, by, radius):
    cfg = HexGridConfig(radius)
    if math.hypot(bx - ax, by - ay) > 10 * radius:
        return
    fwd = crossings((ax, ay), (bx, by), cfg)
    back = crossings((bx, by), (ax, ay), cfg)
    assert fwd == back[::-1]


@settings(max_examples=300)
@given(real, real, real, real, st.sampled_from(RADII))
def test_traversal_is_a_chain_of_neighbors(ax, ay, bx, by, radius):
    cfg = HexGridConfig(radius)
    path = traverse((ax, ay), (bx, by), cfg)
    assert path[0] == point_to_hex((ax, ay), cfg)
    assert path[-1] == point_to_hex((bx, by), cfg)
    assert all(are_adjacent(u, v) for u, v in zip(path[:-1], path[1:]))
    assert len(set(path)) == len(path)


def test_segment_through_a_vertex():
    cfg = HexGridConfig(1.0)
    # the vertex shared by (0,0), (1,-1) and (1,0) sits at (sqrt3/2, -1/2)
    v = (math.sqrt(3) / 2, -0.5)
    a = (v[0] - 1.0, v[1] - 0.0)
    b = (v[0] + 1.0, v[1] + 0.0)
    path = traverse(a, b, cfg)
    assert all(are_adjacent(u, w) for u, w in zip(path[:-1], path[1:]))
    assert crossings(a, b, cfg) == dense_crossings(a, b, 1.0)
