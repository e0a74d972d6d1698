import copy
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecr_analytics.config import METRIC_NAMES
from ecr_analytics.errors import (
    ConfigError,
    CycleDetected,
    HierarchyError,
    NonPositiveWeight,
    OrphanNode,
    UnknownHierarchyNodeReference,
    UnknownMetricBinding,
)
from ecr_analytics.rollup import (
    ABOVE,
    AT,
    BELOW,
    NOT_APPLICABLE,
    aggregate_trial,
    alpha_schedule,
    band,
    default_hierarchy,
    default_hierarchy_dict,
    parse_hierarchy,
    run_rollup,
    score_sheet_from_dict,
    smooth_scores,
)
from ecr_analytics.synthetic import oracle_rollup

from conftest import random_leaves, random_tree

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def tree(children, weights=None):
    weights = weights or [1.0] * len(children)
    return parse_hierarchy({"nodes": [
        {"id": "root", "level": 0, "children": [{"id": c, "weight": w} for c, w in zip(children, weights)]},
        *[{"id": m, "level": 4, "metric": m} for m in children],
    ]})


# -- validation ----------------------------------------------------------------

def test_default_hierarchy_valid():
    h = default_hierarchy()
    assert h.root == "ecr"
    assert sorted(n.metric for n in h.leaves()) == sorted(METRIC_NAMES)


def _edit(fn):
    d = copy.deepcopy(default_hierarchy_dict())
    fn(d)
    return d


def _node(d, nid):
    return next(n for n in d["nodes"] if n["id"] == nid)


def test_self_child_is_cycle():
    d = _edit(lambda d: _node(d, "cooperation")["children"].append({"id": "cooperation", "weight": 1}))
    with pytest.raises(CycleDetected) as err:
        parse_hierarchy(d)
    assert "cooperation" in str(err.value)


def test_unknown_metric_binding():
    d = _edit(lambda d: _node(d, "floor_coverage").update(metric="Foo"))
    with pytest.raises(UnknownMetricBinding):
        parse_hierarchy(d)


def test_orphan_node():
    d = _edit(lambda d: d["nodes"].append({"id": "lost", "level": 2, "children": [{"id": "floor_coverage"}]}))
    with pytest.raises(OrphanNode):
        parse_hierarchy(d)


def test_nonpositive_weight():
    d = _edit(lambda d: _node(d, "cooperation")["children"][0].update(weight=0))
    with pytest.raises(NonPositiveWeight):
        parse_hierarchy(d)


def test_unknown_child():
    d = _edit(lambda d: _node(d, "cooperation")["children"].append({"id": "nope"}))
    with pytest.raises(UnknownHierarchyNodeReference):
        parse_hierarchy(d)


@pytest.mark.parametrize("mutate", [
    lambda d: d["nodes"].append({"id": "root2", "level": 0, "children": [{"id": "floor_coverage"}]}),
    lambda d: _node(d, "cooperation").update(children=[]),
    lambda d: _node(d, "floor_coverage").update(level=3),
    lambda d: d.update(smoothing={"alpha_ceil": 1.5}),
    lambda d: d.update(bands={"above_min": 0.4, "at_min": 0.5}),
    lambda d: d["nodes"][0].pop("level"),
])
def test_structural_errors(mutate):
    with pytest.raises((HierarchyError, ConfigError)):
        parse_hierarchy(_edit(mutate))


# -- aggregation ------------------------------------------------------------------

def test_equal_weight_mean():
    vals = aggregate_trial(tree(["entrance_vectors", "move_along_wall", "floor_coverage"]),
                           {"entrance_vectors": 0.5, "move_along_wall": 0.7, "floor_coverage": 0.9})
    assert vals["root"] == pytest.approx(0.7)


def test_weighted_mean():
    vals = aggregate_trial(tree(["entrance_vectors", "move_along_wall"], [0.25, 0.75]),
                           {"entrance_vectors": 0.4, "move_along_wall": 0.8})
    assert vals["root"] == pytest.approx(0.7)


def test_not_applicable_child_renormalizes():
    h = tree(["entrance_vectors", "move_along_wall"])
    assert aggregate_trial(h, {"entrance_vectors": None, "move_along_wall": 0.6})["root"] == pytest.approx(0.6)
    assert aggregate_trial(h, {})["root"] is None


@given(st.floats(0.01, 100), st.lists(st.floats(0, 1), min_size=3, max_size=3),
       st.lists(st.floats(0.1, 10), min_size=3, max_size=3))
def test_weight_scaling_invariance(k, vals, weights):
    names = ["entrance_vectors", "move_along_wall", "floor_coverage"]
    leaves = dict(zip(names, vals))
    a = aggregate_trial(tree(names, weights), leaves)["root"]
    b = aggregate_trial(tree(names, [k * w for w in weights]), leaves)["root"]
    assert a == pytest.approx(b, abs=1e-12)


# -- smoothing ---------------------------------------------------------------------

def test_alpha_examples():
    for h in (0.5, 1, 3, 10):
        assert alpha_schedule(1, 1.0, h) == 0.0
    assert alpha_schedule(3, 1.0, 2) == pytest.approx(0.5, abs=1e-12)
    assert alpha_schedule(2, 1.0, 2) == pytest.approx(1 - math.exp(-math.log(2) / 2))
    assert alpha_schedule(2, 1.0, 2) == pytest.approx(0.2929, abs=1e-4)
    with pytest.raises(ValueError):
        alpha_schedule(0, 1.0, 2)


@given(st.integers(1, 200), st.floats(0.01, 1.0), st.floats(0.1, 50))
def test_alpha_monotone_bounded(t, ceil, h):
    a, b = alpha_schedule(t, ceil, h), alpha_schedule(t + 1, ceil, h)
    assert 0 <= a <= b <= ceil


def test_smooth_examples():
    assert smooth_scores(0.8, 0.4, 0.25) == pytest.approx(0.5)
    assert smooth_scores(0.8, 0.4, 0.0) == 0.4
    assert smooth_scores(None, 0.4, 0.7) == 0.4
    assert smooth_scores(0.8, None, 0.7) == 0.8


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_smooth_convex(prev, cur, a):
    out = smooth_scores(prev, cur, a)
    assert min(prev, cur) - 1e-12 <= out <= max(prev, cur) + 1e-12


def test_bands():
    assert band(0.85) == ABOVE
    assert band(0.8) == ABOVE
    assert band(0.5) == AT
    assert band(0.2) == BELOW
    assert band(None) == NOT_APPLICABLE


# -- full roll-up -------------------------------------------------------------------

def test_constant_leaves_fixed_point():
    h = default_hierarchy()
    leaves = {n.metric: 0.37 for n in h.leaves()}
    sheet = run_rollup(h, [leaves] * 4)
    for t in sheet.trials:
        for nid in h.nodes:
            assert t.raw[nid] == pytest.approx(0.37, abs=1e-12)
            assert t.smoothed[nid] == pytest.approx(0.37, abs=1e-12)


def test_single_trial_smoothed_equals_raw():
    h = default_hierarchy()
    sheet = run_rollup(h, [random_leaves(np.random.default_rng(1))])
    assert sheet.trials[0].raw == sheet.trials[0].smoothed


def toy():
    h = parse_hierarchy(json.loads((FIXTURES / "hierarchy_toy.json").read_text()))
    trials = [json.loads((FIXTURES / "toy_trials" / f"trial{i}.json").read_text())["metrics"] for i in (1, 2, 3)]
    return h, trials


def test_toy_tree_hand_values():
    h, trials = toy()
    sheet = run_rollup(h, trials)
    # half-life 1: alphas 0, 0.5, 0.75
    assert [t.alpha for t in sheet.trials] == pytest.approx([0.0, 0.5, 0.75])
    assert [t.raw["root"] for t in sheet.trials] == pytest.approx([0.5625, 0.5, 1.0])
    assert [t.smoothed["root"] for t in sheet.trials] == pytest.approx([0.5625, 0.53125, 0.6484375])
    assert [t.smoothed["move"] for t in sheet.trials] == pytest.approx([0.75, 0.625, 0.71875])
    assert [t.smoothed["threat_coverage"] for t in sheet.trials] == pytest.approx([0.25, 0.25, 0.4375])
    assert [t.bands["root"] for t in sheet.trials] == [AT, AT, AT]


def test_smoothed_root_lags_improving_raw():
    h = parse_hierarchy({"nodes": [
        {"id": "r", "level": 0, "children": [{"id": "a"}, {"id": "b"}]},
        {"id": "a", "level": 1, "children": [{"id": "entrance_vectors"}, {"id": "floor_coverage"}]},
        {"id": "b", "level": 1, "children": [{"id": "move_along_wall"}]},
        {"id": "entrance_vectors", "level": 4, "metric": "entrance_vectors"},
        {"id": "floor_coverage", "level": 4, "metric": "floor_coverage"},
        {"id": "move_along_wall", "level": 4, "metric": "move_along_wall"},
    ], "smoothing": {"half_life": 1}})
    trials = [{m: v for m in ("entrance_vectors", "floor_coverage", "move_along_wall")} for v in (0.2, 0.5, 0.9)]
    sheet = run_rollup(h, trials)
    for t in sheet.trials:
        assert t.smoothed["r"] <= t.raw["r"] + 1e-12
    # t=2: 0.5 * 0.2 + 0.5 * 0.5
    assert sheet.trials[1].smoothed["r"] == pytest.approx(0.35)


def test_leaf_smoothing_flag():
    h, trials = toy()
    h.smoothing.smooth_leaves = False
    sheet = run_rollup(h, trials)
    assert sheet.trials[1].smoothed["threat_coverage"] is None
    assert sheet.trials[2].smoothed["entrance_vectors"] == 1.0


def test_sheet_round_trip():
    h, trials = toy()
    sheet = run_rollup(h, trials, label="team")
    d = sheet.to_dict(with_hierarchy=True)
    again = score_sheet_from_dict(json.loads(json.dumps(d)))
    assert again.to_dict(with_hierarchy=True) == d
    with pytest.raises(ConfigError):
        score_sheet_from_dict({"nodes": []})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_oracle_on_random_trees(seed):
    rng = np.random.default_rng(seed)
    h = parse_hierarchy(random_tree(rng))
    trials = [random_leaves(rng) for _ in range(int(rng.integers(1, 5)))]
    sheet = run_rollup(h, trials)
    ref = oracle_rollup(h, trials)
    for t, r in zip(sheet.trials, ref):
        for nid in h.nodes:
            for key, got in (("raw", t.raw[nid]), ("smoothed", t.smoothed[nid])):
                want = r[nid][key]
                assert (got is None) == (want is None)
                if got is not None:
                    assert got == pytest.approx(want, abs=1e-12)
                    assert 0 <= got <= 1
