"""Command-line entry point: file-based pipeline stages.

Subcommands::

    calibrate CONFIG                       fit and check the room homography
    synth SCRIPT OUT [--seed N]            render a scenario script to detections
    track DETECTIONS OUT [--config C]      run the tracker, write tracks.jsonl
    analyze DETECTIONS CONFIG OUT          track, map, gaze and score one trial
    rollup METRICS... OUT                  roll trials up into a score sheet
    report OUT --analysis DIR...           tables, drawings and bundle.json
    run MANIFEST                           replay a manifest (pipeline or echo)

Exit codes: 0 ok, 1 internal failure, 2 input or validation error (including
degenerate calibration points), 3 calibration tolerance exceeded.  Every
command writes ``manifest.json`` into its output directory; ``run`` on that
file repeats the command.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import __version__
from .config import SECTIONS, apply_override
from .errors import (CalibrationError, ConfigError, DegenerateConfiguration, EngineError, InputError,
                     RankDeficient)
from .gaze import dump_gaze, load_gaze_dump
from .homography import calibrate as fit_homography
from .homography import estimate_homography, reprojection_errors
from .ingest import RoomConfig, dump_frames, load_room_config, read_frames
from .mapping import TEAM, AgentRole, dump_trajectories, load_trajectory_dump
from .pipeline import analyze as run_analysis
from .report import (PER_TEAM, PER_TRIAL, ReportBundle, busiest_gaze_frame, render_gaze_overlay,
                     render_score_table, render_trajectory_overlay, write_text)
from .rollup import CtaHierarchy, check_bands, parse_hierarchy, run_rollup, score_sheet_from_dict
from .tracking import dump_tracks, run_tracker

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_CALIBRATION = 0, 1, 2, 3
HIERARCHY_SECTIONS = ("smoothing", "bands")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc.msg})") from None


def _write_manifest(out: str, command: str, argv: list[str]) -> None:
    write_text(os.path.join(out, "manifest.json"),
               _dumps({"engine_version": __version__, "command": command, "argv": argv}))


# -- parameter overrides ---------------------------------------------------------

def _split_override(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"--params expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    return key.strip(), value.strip()


def apply_config_params(config: RoomConfig, overrides: list[str]) -> RoomConfig:
    """Apply ``key=value`` overrides in place.

    A bare key names a metric parameter; ``tracker.``, ``mapping.``,
    ``gaze.``, ``smoothing.`` and ``bands.`` prefixes reach the other
    sections.
    """
    attr = {"metric_params": "metric_params", "tracker": "tracker", "mapping": "mapping", "gaze": "gaze"}
    for item in overrides:
        key, value = _split_override(item)
        section, _, name = key.rpartition(".")
        section = section or "metric_params"
        if section in attr:
            apply_override(getattr(config, attr[section]), name, value)
        elif section in HIERARCHY_SECTIONS:
            apply_hierarchy_params(config.hierarchy, [item])
        else:
            raise ConfigError(f"unknown parameter section {section!r}; use one of "
                              f"{sorted(list(SECTIONS) + list(HIERARCHY_SECTIONS))}")
    config.metric_params.validate()
    config.check_invariants()
    return config


def apply_hierarchy_params(h: CtaHierarchy, overrides: list[str]) -> CtaHierarchy:
    for item in overrides:
        key, value = _split_override(item)
        section, _, name = key.rpartition(".")
        if section == "smoothing":
            apply_override(h.smoothing, name, value)
        elif section == "bands" and name in ("above_min", "at_min"):
            apply_override(h.bands, name, value)
        elif section in SECTIONS or section == "":
            continue  # engine parameters do not affect the roll-up
        else:
            raise ConfigError(f"unknown roll-up parameter {key!r}")
    check_bands(h.bands.above_min, h.bands.at_min)
    if not h.smoothing.half_life > 0 or not 0 <= h.smoothing.alpha_ceil <= 1:
        raise ConfigError("smoothing needs half_life > 0 and alpha_ceil in [0, 1]")
    return h


# -- stages ----------------------------------------------------------------------

def stage_synth(script_path: str, out: str, seed: Optional[int] = None) -> dict:
    from .synthetic import load_scenario, render_scenario

    script = load_scenario(script_path)
    if seed is not None:
        script.seed = int(seed)
    frames, gt = render_scenario(script)
    cfg = script.room.to_dict()
    cfg["fps"] = script.fps
    os.makedirs(out, exist_ok=True)
    write_text(os.path.join(out, "config.json"), _dumps(cfg))
    write_text(os.path.join(out, "detections.jsonl"), dump_frames(frames))
    write_text(os.path.join(out, "ground_truth.json"), gt.to_json())
    write_text(os.path.join(out, "scenario.json"), script.to_json() + "\n")
    return {"config": os.path.join(out, "config.json"), "detections": os.path.join(out, "detections.jsonl"),
            "fps": script.fps}


def _load_config(path: str, params: list[str]) -> RoomConfig:
    return apply_config_params(load_room_config(path), params)


def stage_track(detections: str, out: str, config: Optional[str] = None, fps: Optional[float] = None,
                params: tuple = ()) -> None:
    cfg = _load_config(config, list(params)) if config else None
    frames = read_frames(detections, fps=fps or (cfg.fps if cfg and cfg.fps else 30.0))
    tracks = run_tracker(frames, cfg.tracker if cfg else None)
    os.makedirs(out, exist_ok=True)
    write_text(os.path.join(out, "tracks.jsonl"), dump_tracks(tracks))


def stage_analyze(detections: str, config: str, out: str, fps: Optional[float] = None,
                  params: tuple = (), label: str = "trial") -> dict:
    """Run the full engine on one trial and write every dump plus ``metrics.json``."""
    cfg = _load_config(config, list(params))
    fps = fps or cfg.fps or 30.0
    frames = read_frames(detections, fps=fps)
    if frames.num_detections() == 0:
        _warn(f"{detections}: no detections; every metric is not applicable")
    an = run_analysis(frames, cfg, fps=fps)
    os.makedirs(out, exist_ok=True)
    metrics = {name: r.to_dict() for name, r in an.results.items()}
    doc = {"trial": label, "fps": fps, "engine_version": __version__, "metrics": metrics}
    write_text(os.path.join(out, "metrics.json"), _dumps(doc))
    write_text(os.path.join(out, "tracks.jsonl"), dump_tracks(an.tracks))
    write_text(os.path.join(out, "trajectories.jsonl"), dump_trajectories(an.trajectories))
    write_text(os.path.join(out, "gaze.jsonl"), dump_gaze(an.gaze))
    write_text(os.path.join(out, "roles.json"),
               _dumps({str(k): v.to_dict() for k, v in sorted(an.roles.items())}))
    write_text(os.path.join(out, "calibration.json"),
               _dumps({"matrix": an.homography.matrix.tolist(), "errors": an.calibration_errors}))
    eff = cfg.to_dict()
    eff["fps"] = fps
    write_text(os.path.join(out, "config.json"), _dumps(eff))
    return doc


def _leaf_scores(doc: dict) -> dict[str, Optional[float]]:
    """Metric scores from a ``metrics.json`` document or a flat name->score map."""
    m = doc.get("metrics", doc) if isinstance(doc, dict) else None
    if not isinstance(m, dict):
        raise InputError("metric file must be a JSON object")
    out = {}
    for name, v in m.items():
        score = v.get("score") if isinstance(v, dict) else v
        if score is not None and not isinstance(score, (int, float)):
            raise InputError(f"metric {name!r}: score must be a number or null")
        out[name] = None if score is None else float(score)
    return out


def stage_rollup(metric_docs: list[dict], hierarchy: CtaHierarchy, out: str, label: str = "",
                 layout: str = PER_TRIAL) -> dict:
    sheet = run_rollup(hierarchy, [_leaf_scores(d) for d in metric_docs], label=label)
    os.makedirs(out, exist_ok=True)
    doc = sheet.to_dict(with_hierarchy=True)
    write_text(os.path.join(out, "scoresheet.json"), _dumps(doc))
    csv_text, html_text = render_score_table(sheet, layout)
    write_text(os.path.join(out, "scores.csv"), csv_text)
    write_text(os.path.join(out, "scores.html"), html_text)
    return doc


@dataclass
class AnalysisDir:
    label: str
    config: RoomConfig
    metrics: dict
    trajectories: dict
    roles: dict[int, AgentRole]
    gaze: dict


def load_analysis_dir(path: str) -> AnalysisDir:
    def text(name):
        with open(os.path.join(path, name), encoding="utf-8") as fh:
            return fh.read()

    metrics = _read_json(os.path.join(path, "metrics.json"))
    roles = {int(k): AgentRole(**v) for k, v in _read_json(os.path.join(path, "roles.json")).items()}
    return AnalysisDir(label=str(metrics.get("trial", os.path.basename(path.rstrip(os.sep)))),
                       config=load_room_config(os.path.join(path, "config.json")), metrics=metrics,
                       trajectories=load_trajectory_dump(text("trajectories.jsonl")), roles=roles,
                       gaze=load_gaze_dump(text("gaze.jsonl")))


def stage_report(analyses: list[AnalysisDir], out: str, sheets: Optional[dict] = None,
                 layout: str = PER_TRIAL, reference: Optional[str] = None, frames: Optional[list[int]] = None,
                 parameters: Optional[dict] = None) -> ReportBundle:
    """Drawings come from the last analysis; tables from the score sheet(s)."""
    if not analyses:
        raise InputError("report needs at least one analysis directory")
    os.makedirs(out, exist_ok=True)
    assets = []
    last = analyses[-1]
    ref = None
    if reference:
        with open(reference, encoding="utf-8") as fh:
            ref_traj = load_trajectory_dump(fh.read())
        # the reference file holds the expert team's tracks only
        ref = (ref_traj, {tid: AgentRole(tid, TEAM, entry_order=i + 1) for i, tid in enumerate(sorted(ref_traj))})
    write_text(os.path.join(out, "trajectories.svg"),
               render_trajectory_overlay(last.trajectories, last.roles, last.config, reference=ref))
    assets.append("trajectories.svg")
    if frames is None:
        f = busiest_gaze_frame(last.gaze)
        frames = [] if f is None else [f]
    for f in sorted(set(frames)):
        name = f"gaze_{f}.svg"
        write_text(os.path.join(out, name), render_gaze_overlay(last.gaze, last.config, [f]))
        assets.append(name)
    sheet_docs = None
    if sheets:
        if layout == PER_TRIAL:
            if len(sheets) != 1:
                raise InputError("per-trial layout takes exactly one score sheet")
            table_in = next(iter(sheets.values()))
        else:
            table_in = sheets
        csv_text, html_text = render_score_table(table_in, layout)
        write_text(os.path.join(out, "scores.csv"), csv_text)
        write_text(os.path.join(out, "scores.html"), html_text)
        assets += ["scores.csv", "scores.html"]
        sheet_docs = {k: s.to_dict() for k, s in sorted(sheets.items())}
    bundle = ReportBundle(
        metadata={"trials": [{"label": a.label, "fps": a.metrics.get("fps"),
                              "tracks": len(a.trajectories),
                              "members": sum(1 for r in a.roles.values() if r.is_team)} for a in analyses],
                  "layout": layout, "drawings_from": last.label, "gaze_frames": sorted(set(frames))},
        metrics={a.label: a.metrics.get("metrics", {}) for a in analyses},
        score_sheet=sheet_docs,
        assets=assets,
        parameters=parameters if parameters is not None else {
            "configs": {a.label: a.config.to_dict() for a in analyses}},
    )
    write_text(os.path.join(out, "bundle.json"), bundle.to_json())
    return bundle


# -- pipeline manifests ----------------------------------------------------------

STAGES = ("synth", "analyze", "rollup", "report")


@dataclass
class TrialSpec:
    label: str
    scenario: Optional[str] = None
    seed: Optional[int] = None
    detections: Optional[str] = None
    config: Optional[str] = None
    fps: Optional[float] = None


@dataclass
class RunManifest:
    """A multi-trial pipeline run; relative paths resolve against ``base_dir``."""
    out_dir: str
    trials: list[TrialSpec]
    stages: list[str] = field(default_factory=lambda: list(STAGES))
    seed: Optional[int] = None
    params: list[str] = field(default_factory=list)
    hierarchy: Optional[str] = None
    reference: Optional[str] = None
    label: str = ""
    layout: str = PER_TRIAL
    gaze_frames: Optional[list[int]] = None
    jobs: int = 1
    engine_version: str = __version__
    base_dir: str = "."

    def path(self, p: Optional[str]) -> Optional[str]:
        return None if p is None else os.path.normpath(os.path.join(self.base_dir, p))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def manifest_from_dict(data: dict, base_dir: str = ".") -> RunManifest:
    try:
        trials = [TrialSpec(**t) for t in data["trials"]]
        m = RunManifest(out_dir=data["out_dir"], trials=trials,
                        stages=list(data.get("stages", STAGES)), seed=data.get("seed"),
                        params=list(data.get("params", [])), hierarchy=data.get("hierarchy"),
                        reference=data.get("reference"), label=str(data.get("label", "")),
                        layout=data.get("layout", PER_TRIAL), gaze_frames=data.get("gaze_frames"),
                        jobs=int(data.get("jobs", 1)), engine_version=data.get("engine_version", __version__),
                        base_dir=base_dir)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid run manifest: {exc}") from None
    bad = [s for s in m.stages if s not in STAGES]
    if bad:
        raise InputError(f"unknown stages {bad}; known: {list(STAGES)}")
    if not m.trials:
        raise InputError("run manifest lists no trials")
    labels = [t.label for t in m.trials]
    if len(set(labels)) != len(labels):
        raise InputError("trial labels must be unique")
    if m.layout not in (PER_TRIAL, PER_TEAM):
        raise InputError(f"unknown layout {m.layout!r}")
    if m.engine_version != __version__:
        _warn(f"manifest was written by engine {m.engine_version}, running {__version__}")
    for t in m.trials:
        if t.scenario is None and (t.detections is None or t.config is None):
            raise InputError(f"trial {t.label!r} needs a scenario or detections plus config")
    return m


def _run_trial(m: RunManifest, t: TrialSpec, params: list[str]) -> None:
    root = os.path.join(m.path(m.out_dir), "trials", t.label)
    detections, config, fps = m.path(t.detections), m.path(t.config), t.fps
    if "synth" in m.stages and t.scenario is not None:
        seed = t.seed if t.seed is not None else m.seed
        res = stage_synth(m.path(t.scenario), os.path.join(root, "synth"), seed)
        detections, config, fps = res["detections"], res["config"], fps or res["fps"]
    if "analyze" in m.stages:
        if detections is None:
            raise InputError(f"trial {t.label!r}: analyze needs detections (add the synth stage)")
        stage_analyze(detections, config, os.path.join(root, "analysis"), fps=fps, params=tuple(params),
                      label=t.label)


def run_manifest(m: RunManifest, extra_params: tuple = (), jobs: Optional[int] = None) -> Optional[ReportBundle]:
    params = list(m.params) + list(extra_params)
    out = m.path(m.out_dir)
    jobs = jobs or m.jobs
    if jobs > 1 and len(m.trials) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for fut in [pool.submit(_run_trial, m, t, params) for t in m.trials]:
                fut.result()
    else:
        for t in m.trials:
            _run_trial(m, t, params)
    analysis_dirs = [os.path.join(out, "trials", t.label, "analysis") for t in m.trials]
    sheet = None
    if "rollup" in m.stages or "report" in m.stages:
        missing = [d for d in analysis_dirs if not os.path.exists(os.path.join(d, "metrics.json"))]
        if missing:
            raise InputError(f"no analysis output in {missing[0]}; include the analyze stage")
    if "rollup" in m.stages:
        h = _hierarchy_for(m.path(m.hierarchy), os.path.join(analysis_dirs[0], "config.json"), params)
        docs = [_read_json(os.path.join(d, "metrics.json")) for d in analysis_dirs]
        sheet = stage_rollup(docs, h, os.path.join(out, "rollup"), label=m.label, layout=PER_TRIAL)
    if "report" in m.stages:
        analyses = [load_analysis_dir(d) for d in analysis_dirs]
        sheets = None
        sheet_path = os.path.join(out, "rollup", "scoresheet.json")
        if sheet is not None or os.path.exists(sheet_path):
            s = score_sheet_from_dict(sheet if sheet is not None else _read_json(sheet_path))
            sheets = {s.label or "team": s}
        layout = m.layout if sheets else PER_TRIAL
        parameters = {"manifest": m.to_dict(), "params": params,
                      "configs": {a.label: a.config.to_dict() for a in analyses}}
        return stage_report(analyses, os.path.join(out, "report"), sheets=sheets, layout=layout,
                            reference=m.path(m.reference), frames=m.gaze_frames, parameters=parameters)
    return None


def _hierarchy_for(hierarchy_path: Optional[str], config_path: Optional[str], params: list[str]) -> CtaHierarchy:
    if hierarchy_path:
        data = _read_json(hierarchy_path)
        h = parse_hierarchy(data.get("hierarchy", data))
    elif config_path:
        h = load_room_config(config_path).hierarchy
    else:
        raise InputError("rollup needs --hierarchy or --config")
    return apply_hierarchy_params(h, params)


# -- argument parsing ------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, fps: bool = True) -> None:
    p.add_argument("--params", action="append", default=[], metavar="KEY=VALUE",
                   help="parameter override; bare keys are metric parameters, "
                        "prefix tracker./mapping./gaze./smoothing./bands. for the rest")
    if fps:
        p.add_argument("--fps", type=float, default=None, help="frame rate (default: config, else 30)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecr", description="Room-clearing drill analytics.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit and check the room homography")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="also write homography.json here")

    p = sub.add_parser("synth", help="render a scenario script into a detection stream")
    p.add_argument("script")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=None, help="override the script's noise seed")

    p = sub.add_parser("track", help="run the tracker only")
    p.add_argument("detections")
    p.add_argument("out")
    p.add_argument("--config", default=None)
    _add_common(p)

    p = sub.add_parser("analyze", help="track, map, gaze and score one trial")
    p.add_argument("detections")
    p.add_argument("config")
    p.add_argument("out")
    p.add_argument("--label", default="trial")
    _add_common(p)

    p = sub.add_parser("rollup", help="roll per-trial metric files (trial 1 first) into a score sheet")
    p.add_argument("metrics", nargs="+")
    p.add_argument("out")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--hierarchy", help="hierarchy JSON (or a room config holding one)")
    g.add_argument("--config", help="room config whose hierarchy section is used")
    p.add_argument("--label", default="")
    _add_common(p, fps=False)

    p = sub.add_parser("report", help="render tables, drawings and bundle.json")
    p.add_argument("out")
    p.add_argument("--analysis", nargs="+", required=True, help="analysis output directories, trial order")
    p.add_argument("--scoresheet", nargs="*", default=[], help="scoresheet.json files (one per team)")
    p.add_argument("--layout", choices=[PER_TRIAL, PER_TEAM], default=PER_TRIAL)
    p.add_argument("--reference", default=None, help="reference trajectory dump for a side-by-side drawing")
    p.add_argument("--frames", type=int, nargs="*", default=None, help="frames for gaze_<frame>.svg")

    p = sub.add_parser("run", help="run a pipeline manifest or replay a command echo")
    p.add_argument("manifest")
    p.add_argument("--jobs", type=int, default=None, help="parallel trials")
    _add_common(p, fps=False)
    return ap


def _abs(p: Optional[str]) -> Optional[str]:
    return None if p is None else os.path.abspath(p)


def _echo_argv(args: argparse.Namespace) -> list[str]:
    """Normalized argument list with absolute paths, replayable by ``run``."""
    c = args.command
    params = [x for p in args.params for x in ("--params", p)] if hasattr(args, "params") else []
    fps = ["--fps", repr(args.fps)] if getattr(args, "fps", None) is not None else []
    if c == "synth":
        return [_abs(args.script), _abs(args.out)] + ([] if args.seed is None else ["--seed", str(args.seed)])
    if c == "track":
        return [_abs(args.detections), _abs(args.out)] + (["--config", _abs(args.config)] if args.config else []) \
            + fps + params
    if c == "analyze":
        return [_abs(args.detections), _abs(args.config), _abs(args.out), "--label", args.label] + fps + params
    if c == "rollup":
        src = ["--hierarchy", _abs(args.hierarchy)] if args.hierarchy else ["--config", _abs(args.config)]
        return [_abs(m) for m in args.metrics] + [_abs(args.out)] + src + ["--label", args.label] + params
    if c == "report":
        out = [_abs(args.out), "--analysis"] + [_abs(a) for a in args.analysis] + ["--layout", args.layout]
        if args.scoresheet:
            out += ["--scoresheet"] + [_abs(s) for s in args.scoresheet]
        if args.reference:
            out += ["--reference", _abs(args.reference)]
        if args.frames is not None:
            out += ["--frames"] + [str(f) for f in args.frames]
        return out
    return []


def cmd_calibrate(args) -> int:
    cfg = load_room_config(args.config)
    tol = cfg.mapping.calibration_tolerance
    h = estimate_homography(cfg.calibration_pixels, cfg.calibration_map)
    err = reprojection_errors(h, cfg.calibration_pixels, cfg.calibration_map)
    print("homography (pixel -> map):")
    for row in h.matrix:
        print("  " + "  ".join(f"{v: .9e}" for v in row))
    for i, e in enumerate(err):
        print(f"pair {i}: reprojection error {e:.3e} m")
    print(f"max error {err.max():.3e} m (tolerance {tol} m)")
    if args.out:
        write_text(os.path.join(args.out, "homography.json"),
                   _dumps({"matrix": h.matrix.tolist(), "errors": [float(e) for e in err], "tolerance": tol}))
    fit_homography(cfg.calibration_pixels, cfg.calibration_map, tol)  # raises past tolerance
    return EXIT_OK


def cmd_synth(args) -> int:
    res = stage_synth(args.script, args.out, args.seed)
    print(f"wrote {res['detections']}")
    return EXIT_OK


def cmd_track(args) -> int:
    stage_track(args.detections, args.out, args.config, args.fps, tuple(args.params))
    return EXIT_OK


def cmd_analyze(args) -> int:
    doc = stage_analyze(args.detections, args.config, args.out, args.fps, tuple(args.params), args.label)
    for name, r in doc["metrics"].items():
        print(f"{name:28s} {'N/A' if r['score'] is None else format(r['score'], '.3f')}")
    return EXIT_OK


def cmd_rollup(args) -> int:
    h = _hierarchy_for(args.hierarchy, args.config, list(args.params))
    docs = [_read_json(p) for p in args.metrics]
    doc = stage_rollup(docs, h, args.out, label=args.label)
    root = next(n for n in doc["nodes"] if n["level"] == 0)
    last = root["trials"][-1]
    print(f"{root['name']}: {'N/A' if last['smoothed'] is None else format(last['smoothed'], '.3f')} ({last['band']})")
    return EXIT_OK


def cmd_report(args) -> int:
    analyses = [load_analysis_dir(a) for a in args.analysis]
    sheets = {}
    for i, path in enumerate(args.scoresheet):
        s = score_sheet_from_dict(_read_json(path))
        sheets[s.label or f"team{i + 1}"] = s
    stage_report(analyses, args.out, sheets=sheets or None, layout=args.layout, reference=args.reference,
                 frames=args.frames)
    print(f"wrote {os.path.join(args.out, 'bundle.json')}")
    return EXIT_OK


def cmd_run(args) -> int:
    data = _read_json(args.manifest)
    if isinstance(data, dict) and "command" in data:
        if data["command"] == "run":
            raise InputError("a run echo cannot be replayed recursively")
        return main([data["command"]] + [str(a) for a in data.get("argv", [])])
    m = manifest_from_dict(data, base_dir=os.path.dirname(os.path.abspath(args.manifest)))
    bundle = run_manifest(m, extra_params=tuple(args.params), jobs=args.jobs)
    if bundle is not None:
        print(f"wrote {os.path.join(m.path(m.out_dir), 'report', 'bundle.json')}")
    return EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "synth": cmd_synth, "track": cmd_track, "analyze": cmd_analyze,
            "rollup": cmd_rollup, "report": cmd_report, "run": cmd_run}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        code = COMMANDS[args.command](args)
        out = getattr(args, "out", None)
        if code == EXIT_OK and out and args.command not in ("calibrate", "run"):
            _write_manifest(out, args.command, _echo_argv(args))
        return code
    except (DegenerateConfiguration, RankDeficient) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (InputError, FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EngineError, Exception) as exc:  # noqa: BLE001 - last-resort mapping to exit 1
        print(f"internal error: {exc}", file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
