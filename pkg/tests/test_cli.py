import json
import os
from pathlib import Path

import pytest

from ecr_analytics.cli import EXIT_CALIBRATION, EXIT_INPUT, EXIT_OK, main
from ecr_analytics.config import METRIC_NAMES
from ecr_analytics.rollup import default_hierarchy_dict

from conftest import SCALE, toy_room_dict

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
SCENARIOS = FIXTURES / "scenarios"


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def read_json(path):
    return json.loads(Path(path).read_text())


# -- calibrate ---------------------------------------------------------------------

def test_calibrate_ok(tmp_path, capsys):
    cfg = write_json(tmp_path / "room.json", toy_room_dict())
    assert main(["calibrate", cfg, "--out", str(tmp_path / "h")]) == EXIT_OK
    assert "max error" in capsys.readouterr().out
    h = read_json(tmp_path / "h" / "homography.json")
    assert max(h["errors"]) < 1e-9


def test_calibrate_collinear_is_input_error(tmp_path):
    d = toy_room_dict()
    d["calibration"]["pairs"] = [{"pixel": [i * SCALE, i * SCALE], "map": [i, i]} for i in range(4)]
    assert main(["calibrate", write_json(tmp_path / "room.json", d)]) == EXIT_INPUT


def test_calibrate_outside_tolerance(tmp_path):
    d = toy_room_dict()
    d["calibration"]["pairs"].append({"pixel": [2 * SCALE, 2 * SCALE], "map": [2.6, 2.0]})
    assert main(["calibrate", write_json(tmp_path / "room.json", d)]) == EXIT_CALIBRATION


def test_missing_file_and_bad_args(tmp_path):
    assert main(["calibrate", str(tmp_path / "nope.json")]) == EXIT_INPUT
    assert main(["frobnicate"]) == EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["calibrate", str(bad)]) == EXIT_INPUT


# -- analyze ---------------------------------------------------------------------

def test_analyze_empty_stream(tmp_path):
    det = tmp_path / "det.jsonl"
    det.write_text("")
    cfg = write_json(tmp_path / "room.json", toy_room_dict())
    out = tmp_path / "out"
    assert main(["analyze", str(det), cfg, str(out)]) == EXIT_OK
    metrics = read_json(out / "metrics.json")["metrics"]
    assert sorted(metrics) == sorted(METRIC_NAMES)
    assert all(m["score"] is None for m in metrics.values())


def test_analyze_bad_detection_line(tmp_path):
    det = tmp_path / "det.jsonl"
    det.write_text('{"frame_index": 0}\n')
    cfg = write_json(tmp_path / "room.json", toy_room_dict())
    assert main(["analyze", str(det), cfg, str(tmp_path / "out")]) == EXIT_INPUT


# -- rollup ------------------------------------------------------------------------

def test_rollup_single_trial(tmp_path):
    m = write_json(tmp_path / "m.json", {"metrics": {n: {"score": 0.6} for n in METRIC_NAMES}})
    h = write_json(tmp_path / "h.json", default_hierarchy_dict())
    assert main(["rollup", m, str(tmp_path / "out"), "--hierarchy", h]) == EXIT_OK
    sheet = read_json(tmp_path / "out" / "scoresheet.json")
    for node in sheet["nodes"]:
        t = node["trials"][0]
        assert t["smoothed"] == t["raw"] == pytest.approx(0.6)


def test_rollup_toy_fixture(tmp_path):
    trials = [str(FIXTURES / "toy_trials" / f"trial{i}.json") for i in (1, 2, 3)]
    out = tmp_path / "out"
    assert main(["rollup", *trials, str(out), "--hierarchy", str(FIXTURES / "hierarchy_toy.json")]) == EXIT_OK
    root = next(n for n in read_json(out / "scoresheet.json")["nodes"] if n["id"] == "root")
    assert [t["smoothed"] for t in root["trials"]] == pytest.approx([0.5625, 0.53125, 0.6484375])
    assert (out / "scores.csv").read_text().splitlines()[1].endswith("0.562,0.531,0.648")


def test_rollup_cycle_exits_2(tmp_path):
    d = default_hierarchy_dict()
    node = next(n for n in d["nodes"] if n.get("children"))
    node["children"].append({"id": node["id"], "weight": 1})
    h = write_json(tmp_path / "h.json", d)
    m = write_json(tmp_path / "m.json", {"metrics": {}})
    assert main(["rollup", m, str(tmp_path / "out"), "--hierarchy", h]) == EXIT_INPUT


def test_rollup_param_overrides(tmp_path):
    trials = [str(FIXTURES / "toy_trials" / f"trial{i}.json") for i in (1, 2, 3)]
    h = str(FIXTURES / "hierarchy_toy.json")
    assert main(["rollup", *trials, str(tmp_path / "a"), "--hierarchy", h, "--params", "smoothing.half_life=1e12"]) == 0
    root = next(n for n in read_json(tmp_path / "a" / "scoresheet.json")["nodes"] if n["id"] == "root")
    assert [t["smoothed"] for t in root["trials"]] == pytest.approx([t["raw"] for t in root["trials"]], abs=1e-9)
    assert main(["rollup", *trials, str(tmp_path / "b"), "--hierarchy", h, "--params", "bogus.x=1"]) == EXIT_INPUT


# -- synth and composition -----------------------------------------------------------------

def test_synth_deterministic(tmp_path):
    s = str(SCENARIOS / "perfect_doctrine.json")
    assert main(["synth", s, str(tmp_path / "a")]) == EXIT_OK
    assert main(["synth", s, str(tmp_path / "b")]) == EXIT_OK
    assert main(["synth", s, str(tmp_path / "c"), "--seed", "99"]) == EXIT_OK
    a, b, c = ((tmp_path / x / "detections.jsonl").read_text() for x in "abc")
    assert a == b and a != c


def test_unknown_metric_param(tmp_path):
    s = tmp_path / "s"
    assert main(["synth", str(SCENARIOS / "single_agent.json"), str(s)]) == EXIT_OK
    assert main(["analyze", str(s / "detections.jsonl"), str(s / "config.json"), str(tmp_path / "o"),
                 "--params", "no_such_param=3"]) == EXIT_INPUT


def test_stages_compose(tmp_path):
    s, a, r, rep = (tmp_path / x for x in ("synth", "analysis", "rollup", "report"))
    assert main(["synth", str(SCENARIOS / "perfect_doctrine.json"), str(s)]) == EXIT_OK
    assert main(["analyze", str(s / "detections.jsonl"), str(s / "config.json"), str(a), "--label", "t1"]) == 0
    assert main(["rollup", str(a / "metrics.json"), str(r), "--config", str(a / "config.json")]) == EXIT_OK
    assert main(["report", str(rep), "--analysis", str(a), "--scoresheet", str(r / "scoresheet.json")]) == 0
    bundle = read_json(rep / "bundle.json")
    assert "trajectories.svg" in bundle["assets"] and "scores.csv" in bundle["assets"]
    assert bundle["metadata"]["trials"][0]["members"] >= 1
    for asset in bundle["assets"]:
        assert (rep / asset).exists()

    # every stage leaves a replayable echo
    echo = read_json(a / "manifest.json")
    assert echo["command"] == "analyze"
    before = (a / "metrics.json").read_text()
    (a / "metrics.json").unlink()
    assert main(["run", str(a / "manifest.json")]) == EXIT_OK
    assert (a / "metrics.json").read_text() == before


def test_params_change_analysis(tmp_path):
    s = tmp_path / "s"
    assert main(["synth", str(SCENARIOS / "single_agent.json"), str(s)]) == EXIT_OK
    args = [str(s / "detections.jsonl"), str(s / "config.json")]
    assert main(["analyze", *args, str(tmp_path / "a")]) == EXIT_OK
    assert main(["analyze", *args, str(tmp_path / "b"), "--params", "tracker.min_hits=1000"]) == EXIT_OK
    a = read_json(tmp_path / "a" / "metrics.json")["metrics"]
    b = read_json(tmp_path / "b" / "metrics.json")["metrics"]
    assert a != b
    assert read_json(tmp_path / "b" / "config.json")["tracker"]["min_hits"] == 1000


def test_run_manifest(tmp_path):
    m = read_json(FIXTURES / "demo_manifest.json")
    m["out_dir"] = str(tmp_path / "build")
    for t in m["trials"]:
        t["scenario"] = str(FIXTURES / t["scenario"])
    path = write_json(tmp_path / "m.json", m)
    assert main(["run", path]) == EXIT_OK
    bundle = read_json(tmp_path / "build" / "report" / "bundle.json")
    assert sorted(bundle["metrics"]) == ["trial1", "trial2"]
    assert bundle["metadata"]["drawings_from"] == "trial2"
    bad = dict(m, stages=["synth", "dance"])
    assert main(["run", write_json(tmp_path / "bad.json", bad)]) == EXIT_INPUT
