import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptzupt.evaluation import (
    RecordingResult,
    ecdf,
    loop_closure_error,
    merged_trajectory_error,
    path_length,
    read_results_csv,
    rmse,
    safe_name,
    summarize,
    write_ecdf_csv,
    write_results_csv,
    write_summary_json,
)
from oracles import rmse_mp

FROZEN = json.loads((Path(__file__).parent / "data" / "frozen_oracles.json").read_text())
errors = st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=60)
vectors = st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=30)


def test_closed_trajectory_zero():
    p = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 0.3], [0.0, 0.0, 1.0]])
    assert loop_closure_error(p) == 0.0


def test_straight_segment():
    assert loop_closure_error(np.array([[0.0, 0.0], [3.0, 0.0]])) == 3.0


def test_injected_offset_on_simulated_loop(walk_clean):
    _, gt = walk_clean
    p = gt.p.copy()
    assert loop_closure_error(p) < 1e-12
    off = np.array([0.3, -0.4, 0.0])
    p[-1] += off
    assert abs(loop_closure_error(p) - 0.5) <= 1e-12


def test_loop_closure_uses_trajectory_objects(walk_clean):
    _, gt = walk_clean
    assert loop_closure_error(gt) == loop_closure_error(gt.p)
    assert path_length(gt) > 11.0


def test_rmse_example():
    assert rmse([3, 4]) == pytest.approx(math.sqrt(12.5), rel=1e-15)


def test_rmse_frozen():
    d = FROZEN["rmse"]
    assert rmse(d["errors"]) == pytest.approx(d["value"], rel=1e-14)


def test_empty_inputs_rejected():
    for fn in (rmse, ecdf, merged_trajectory_error, summarize):
        with pytest.raises(ValueError):
            fn([])


def test_ecdf_examples():
    c = ecdf([1.0])
    assert c.errors.tolist() == [1.0] and c.prob.tolist() == [1.0]
    c = ecdf([4, 2, 3, 1])
    assert c.prob.tolist() == [0.25, 0.5, 0.75, 1.0]
    assert c.errors.tolist() == [1, 2, 3, 4]
    assert c.median == 2.0
    assert c.quantile(1.0) == 4.0


def test_merged_examples():
    assert merged_trajectory_error([(1, 0), (-1, 0)]) == 0.0
    assert merged_trajectory_error([(3, 0), (0, 4)]) == 5.0


def test_negative_error_rejected():
    with pytest.raises(ValueError):
        RecordingResult("a", "m", -0.1, 1.0)


@settings(max_examples=200)
@given(errors)
def test_rmse_at_least_mae(e):
    mae = sum(abs(x) for x in e) / len(e)
    assert rmse(e) >= mae * (1 - 1e-12) >= 0


@settings(max_examples=100)
@given(errors)
def test_rmse_matches_extended_precision(e):
    assert rmse(e) == pytest.approx(rmse_mp(e), rel=1e-14, abs=1e-300)


@settings(max_examples=200)
@given(errors)
def test_ecdf_is_distribution(e):
    c = ecdf(e)
    assert np.all(np.diff(c.errors) >= 0)
    assert np.all(np.diff(c.prob) > 0)
    assert c.prob[-1] == 1.0 and c.prob[0] > 0


@settings(max_examples=100)
@given(errors, st.randoms(use_true_random=False))
def test_ecdf_permutation_invariant(e, rnd):
    shuffled = list(e)
    rnd.shuffle(shuffled)
    assert np.array_equal(ecdf(e).errors, ecdf(shuffled).errors)


@settings(max_examples=200)
@given(vectors)
def test_merged_triangle_inequality(v):
    total = sum(math.hypot(*x) for x in v)
    assert merged_trajectory_error(v) <= total * (1 + 1e-12) + 1e-12


@settings(max_examples=100)
@given(vectors)
def test_merged_equals_independent_sum(v):
    sx = sum(x for x, _ in v)
    sy = sum(y for _, y in v)
    assert merged_trajectory_error(v) == pytest.approx(math.hypot(sx, sy), abs=1e-9)


def sample_results():
    return [
        RecordingResult("r1", "adaptive", 0.3, 11.6, (0.3, 0.0)),
        RecordingResult("r2", "adaptive", 0.4, 11.6, (-0.2, 0.0)),
        RecordingResult("r1", "fixed:10", 0.5, 11.5, (0.5, 0.0)),
        RecordingResult("r2", "fixed:10", 0.1, 11.5, (0.0, 0.1)),
        RecordingResult("r1", "fixed:100", 0.2, 11.4, (0.2, 0.0)),
        RecordingResult("r2", "fixed:100", 0.2, 11.4, (0.2, 0.0)),
    ]


def test_summary_shape():
    s = summarize(sample_results())
    a = s["methods"]["adaptive"]
    assert a["recordings"] == 2
    assert a["rmse_m"] == pytest.approx(math.sqrt((0.09 + 0.16) / 2))
    assert a["merged_error_m"] == pytest.approx(0.1)
    assert a["total_length_m"] == pytest.approx(23.2)
    assert s["best_fixed_by_rmse"] == "fixed:100"
    assert s["best_fixed_by_merged_error"] == "fixed:100"


def test_result_files(tmp_path):
    res = sample_results()
    write_results_csv(res, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "recording,method,error_m,length_m"
    back = read_results_csv(tmp_path / "r.csv")
    assert [(r.recording, r.method, r.error_m, r.length_m) for r in back] == [
        (r.recording, r.method, r.error_m, r.length_m) for r in res
    ]
    write_ecdf_csv(ecdf([0.2, 0.1]), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "error_m,prob\n0.1,0.5\n0.2,1.0\n"
    write_summary_json(summarize(res), tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())["methods"]["fixed:10"]["recordings"] == 2


def test_safe_name():
    assert safe_name("fixed:1e+03") == "fixed_1e_03"
    assert safe_name("adaptive") == "adaptive"
