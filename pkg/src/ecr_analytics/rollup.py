"""Weighted hierarchical roll-up of metric scores with trial-wise smoothing.

A hierarchy is a DAG of construct nodes (levels 0-3) over metric leaves
(level 4).  For each trial a node's raw value is the weighted mean of its
applicable children; every node is then blended with its previous smoothed
value using a trial-dependent factor that ramps from 0 towards
``alpha_ceil`` with the configured half-life.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .config import METRIC_NAMES
from .errors import (
    ConfigError,
    CycleDetected,
    HierarchyError,
    NonPositiveWeight,
    OrphanNode,
    UnknownHierarchyNodeReference,
    UnknownMetricBinding,
)

ABOVE, AT, BELOW, NOT_APPLICABLE = "above", "at", "below", "n/a"

Score = Optional[float]


@dataclass
class Node:
    id: str
    name: str
    level: int
    children: list[tuple[str, float]] = field(default_factory=list)
    metric: str | None = None

    @property
    def is_leaf(self) -> bool:
        return self.metric is not None


@dataclass
class Smoothing:
    alpha_ceil: float = 1.0
    half_life: float = 3.0
    smooth_leaves: bool = True


@dataclass
class Bands:
    above_min: float = 0.8
    at_min: float = 0.5
    per_node: dict[str, tuple[float, float]] = field(default_factory=dict)

    def for_node(self, node_id: str) -> tuple[float, float]:
        return self.per_node.get(node_id, (self.above_min, self.at_min))


@dataclass
class CtaHierarchy:
    nodes: dict[str, Node]
    smoothing: Smoothing = field(default_factory=Smoothing)
    bands: Bands = field(default_factory=Bands)

    @property
    def root(self) -> str:
        roots = [n.id for n in self.nodes.values() if n.level == 0]
        if len(roots) != 1:
            raise HierarchyError(f"expected exactly one level-0 root, found {len(roots)}")
        return roots[0]

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.is_leaf]

    def topological_order(self) -> list[str]:
        """Children before parents."""
        order: list[str] = []
        seen: set[str] = set()

        def visit(nid: str) -> None:
            if nid in seen:
                return
            seen.add(nid)
            for cid, _ in self.nodes[nid].children:
                visit(cid)
            order.append(nid)

        for nid in sorted(self.nodes):
            visit(nid)
        return order

    def display_order(self) -> list[str]:
        return sorted(self.nodes, key=lambda i: (self.nodes[i].level, self.nodes[i].name, i))

    def to_dict(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            d = {"id": n.id, "name": n.name, "level": n.level}
            if n.metric is not None:
                d["metric"] = n.metric
            else:
                d["children"] = [{"id": c, "weight": w} for c, w in n.children]
            nodes.append(d)
        return {
            "nodes": nodes,
            "smoothing": {
                "alpha_ceil": self.smoothing.alpha_ceil,
                "half_life": self.smoothing.half_life,
                "smooth_leaves": self.smoothing.smooth_leaves,
            },
            "bands": {
                "above_min": self.bands.above_min,
                "at_min": self.bands.at_min,
                "per_node": {k: list(v) for k, v in sorted(self.bands.per_node.items())},
            },
        }


def parse_hierarchy(data: dict) -> CtaHierarchy:
    """Build a hierarchy from its JSON form and validate it."""
    try:
        nodes: dict[str, Node] = {}
        for raw in data["nodes"]:
            nid = str(raw["id"])
            if nid in nodes:
                raise HierarchyError(f"duplicate node id {nid!r}")
            children = [(str(c["id"]), float(c.get("weight", 1.0))) for c in raw.get("children", [])]
            nodes[nid] = Node(
                id=nid,
                name=str(raw.get("name", nid)),
                level=int(raw["level"]),
                children=children,
                metric=raw.get("metric"),
            )
        sm = data.get("smoothing", {})
        smoothing = Smoothing(
            alpha_ceil=float(sm.get("alpha_ceil", 1.0)),
            half_life=float(sm.get("half_life", 3.0)),
            smooth_leaves=bool(sm.get("smooth_leaves", True)),
        )
        bd = data.get("bands", {})
        bands = Bands(
            above_min=float(bd.get("above_min", 0.8)),
            at_min=float(bd.get("at_min", 0.5)),
            per_node={k: (float(v[0]), float(v[1])) for k, v in bd.get("per_node", {}).items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise HierarchyError(f"malformed hierarchy: {exc}") from exc
    h = CtaHierarchy(nodes=nodes, smoothing=smoothing, bands=bands)
    validate_hierarchy(h)
    return h


def _find_cycle(h: CtaHierarchy) -> list[str] | None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in h.nodes}
    stack: list[str] = []

    def dfs(nid: str) -> list[str] | None:
        color[nid] = GREY
        stack.append(nid)
        for cid, _ in h.nodes[nid].children:
            if color[cid] == GREY:
                return stack[stack.index(cid):] + [cid]
            if color[cid] == WHITE:
                found = dfs(cid)
                if found:
                    return found
        stack.pop()
        color[nid] = BLACK
        return None

    for nid in sorted(h.nodes):
        if color[nid] == WHITE:
            found = dfs(nid)
            if found:
                return found
    return None


def validate_hierarchy(h: CtaHierarchy) -> None:
    """Raise the first structural problem found; return None if the tree is sound."""
    for n in h.nodes.values():
        for cid, w in n.children:
            if cid not in h.nodes:
                raise UnknownHierarchyNodeReference(f"node {n.id!r} references unknown child {cid!r}")
    cycle = _find_cycle(h)
    if cycle:
        raise CycleDetected(cycle)
    root = h.root
    for n in h.nodes.values():
        if not 0 <= n.level <= 4:
            raise HierarchyError(f"node {n.id!r} has level {n.level} outside 0..4")
        if n.metric is not None:
            if n.metric not in METRIC_NAMES:
                raise UnknownMetricBinding(f"leaf {n.id!r} binds unknown metric {n.metric!r}")
            if n.children:
                raise HierarchyError(f"leaf {n.id!r} must not have children")
            if n.level != 4:
                raise HierarchyError(f"leaf {n.id!r} must be at level 4")
        else:
            if not n.children:
                raise HierarchyError(f"non-leaf {n.id!r} has no children")
            if n.level == 4:
                raise HierarchyError(f"level-4 node {n.id!r} must bind a metric")
        for cid, w in n.children:
            if not w > 0:
                raise NonPositiveWeight(f"edge {cid!r} -> {n.id!r} has weight {w}")
            if h.nodes[cid].level <= n.level:
                raise HierarchyError(f"child {cid!r} must sit below parent {n.id!r}")
    reach: set[str] = set()
    todo = [root]
    while todo:
        nid = todo.pop()
        if nid in reach:
            continue
        reach.add(nid)
        todo.extend(c for c, _ in h.nodes[nid].children)
    orphans = sorted(set(h.nodes) - reach)
    if orphans:
        raise OrphanNode(f"nodes unreachable from root: {orphans}")
    check_bands(h.bands.above_min, h.bands.at_min)
    for nid, (above, at) in h.bands.per_node.items():
        if nid not in h.nodes:
            raise UnknownHierarchyNodeReference(f"band override for unknown node {nid!r}")
        check_bands(above, at)
    if not 0 < h.smoothing.alpha_ceil <= 1:
        raise ConfigError("smoothing.alpha_ceil must be in (0, 1]")
    if not h.smoothing.half_life > 0:
        raise ConfigError("smoothing.half_life must be > 0")


def check_bands(above_min: float, at_min: float) -> None:
    if not 0 <= at_min < above_min <= 1:
        raise ConfigError(f"band thresholds need 0 <= at_min < above_min <= 1, got {at_min}, {above_min}")


def aggregate_trial(h: CtaHierarchy, leaf_values: dict[str, Score]) -> dict[str, Score]:
    """Raw node values for one trial, computed bottom-up.

    ``leaf_values`` maps metric names to scores; missing or ``None`` entries
    are not applicable and drop out of their parents' weight sums.
    """
    values: dict[str, Score] = {}
    for nid in h.topological_order():
        node = h.nodes[nid]
        if node.is_leaf:
            v = leaf_values.get(node.metric)
            values[nid] = None if v is None else float(v)
            continue
        total = 0.0
        weight = 0.0
        for cid, w in node.children:
            x = values[cid]
            if x is None:
                continue
            total += w * x
            weight += w
        values[nid] = total / weight if weight > 0 else None
    return values


def alpha_schedule(t: int, alpha_ceil: float, half_life: float) -> float:
    if t < 1:
        raise ValueError("trial index starts at 1")
    lam = math.log(2.0) / half_life
    return alpha_ceil * (1.0 - math.exp(-lam * (t - 1)))


def smooth_scores(prev: Score, current: Score, alpha: float) -> Score:
    """Blend the previous smoothed score with the current raw value.

    A missing current value carries the previous score forward; a missing
    previous score means there is no history yet.
    """
    if current is None:
        return prev
    if prev is None:
        return current
    return alpha * prev + (1.0 - alpha) * current


def band(score: Score, above_min: float = 0.8, at_min: float = 0.5) -> str:
    if score is None:
        return NOT_APPLICABLE
    if score >= above_min:
        return ABOVE
    if score >= at_min:
        return AT
    return BELOW


@dataclass
class TrialScores:
    trial: int
    alpha: float
    raw: dict[str, Score]
    smoothed: dict[str, Score]
    bands: dict[str, str]


@dataclass
class ScoreSheet:
    hierarchy: CtaHierarchy
    trials: list[TrialScores]
    label: str = ""

    @property
    def final(self) -> TrialScores:
        return self.trials[-1]

    def to_dict(self, with_hierarchy: bool = False) -> dict:
        out_nodes = []
        for nid in self.hierarchy.display_order():
            n = self.hierarchy.nodes[nid]
            out_nodes.append({
                "id": nid,
                "name": n.name,
                "level": n.level,
                "trials": [
                    {"trial": t.trial, "raw": t.raw[nid], "smoothed": t.smoothed[nid], "band": t.bands[nid]}
                    for t in self.trials
                ],
            })
        out = {
            "label": self.label,
            "alphas": [t.alpha for t in self.trials],
            "nodes": out_nodes,
        }
        if with_hierarchy:
            out["hierarchy"] = self.hierarchy.to_dict()
        return out


def score_sheet_from_dict(data: dict) -> ScoreSheet:
    """Inverse of ``ScoreSheet.to_dict(with_hierarchy=True)``."""
    try:
        h = parse_hierarchy(data["hierarchy"])
        alphas = [float(a) for a in data["alphas"]]
        trials = [TrialScores(trial=i + 1, alpha=a, raw={}, smoothed={}, bands={}) for i, a in enumerate(alphas)]
        for node in data["nodes"]:
            for t, rec in zip(trials, node["trials"]):
                t.raw[node["id"]] = rec["raw"]
                t.smoothed[node["id"]] = rec["smoothed"]
                t.bands[node["id"]] = rec["band"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed score sheet: {exc}") from exc
    missing = set(h.nodes) - set(trials[0].raw if trials else h.nodes)
    if missing:
        raise ConfigError(f"score sheet lacks nodes {sorted(missing)}")
    return ScoreSheet(hierarchy=h, trials=trials, label=str(data.get("label", "")))


def run_rollup(h: CtaHierarchy, trials: list[dict[str, Score]], label: str = "") -> ScoreSheet:
    """Roll up per-trial metric scores (trial 1 first) into a score sheet."""
    validate_hierarchy(h)
    sm = h.smoothing
    prev: dict[str, Score] = {nid: None for nid in h.nodes}
    sheet = []
    for t, leaf_values in enumerate(trials, start=1):
        raw = aggregate_trial(h, leaf_values)
        alpha = alpha_schedule(t, sm.alpha_ceil, sm.half_life)
        smoothed: dict[str, Score] = {}
        for nid, node in h.nodes.items():
            if node.is_leaf and not sm.smooth_leaves:
                smoothed[nid] = raw[nid]
            else:
                smoothed[nid] = smooth_scores(prev[nid], raw[nid], alpha)
        bands = {nid: band(smoothed[nid], *h.bands.for_node(nid)) for nid in h.nodes}
        sheet.append(TrialScores(trial=t, alpha=alpha, raw=raw, smoothed=smoothed, bands=bands))
        prev = smoothed
    return ScoreSheet(hierarchy=h, trials=sheet, label=label)


_METRIC_TITLES = {
    "entrance_vectors": "Entrance Vectors",
    "entrance_hesitation": "Entrance Hesitation",
    "identify_capture_pod": "Identify and Capture POD",
    "pod_capture_time": "POD Capture Time",
    "move_along_wall": "Move Along the Wall",
    "threat_clearance": "Threat Clearance",
    "threat_coverage": "Threat Coverage",
    "teammate_coverage": "Teammate Coverage",
    "floor_coverage": "Floor Coverage",
    "total_floor_coverage_time": "Total Floor Coverage Time",
}


def metric_title(name: str) -> str:
    return _METRIC_TITLES.get(name, name)


def default_hierarchy_dict() -> dict:
    """Shipped hierarchy: only the metric-to-construct links that are known.

    Metrics whose construct placement is unknown hang under a generic
    level-3 "Other Drill Execution" node; replace the whole tree with your
    own model via the ``hierarchy`` section of the room config.
    """
    leaves = [
        {"id": m, "name": metric_title(m), "level": 4, "metric": m} for m in METRIC_NAMES
    ]

    def kids(*ids):
        return [{"id": i, "weight": 1.0} for i in ids]

    constructs = [
        {"id": "ecr", "name": "ECR Performance", "level": 0,
         "children": kids("cognitive", "teamwork", "behavioral")},
        {"id": "cognitive", "name": "Cognitive", "level": 1,
         "children": kids("task_comprehension", "situational_awareness")},
        {"id": "teamwork", "name": "Teamwork", "level": 1,
         "children": kids("cooperation", "role_clarity")},
        {"id": "behavioral", "name": "Behavioral", "level": 1,
         "children": kids("other_execution")},
        {"id": "task_comprehension", "name": "Task Comprehension", "level": 3,
         "children": kids("identify_capture_pod", "threat_clearance", "floor_coverage")},
        {"id": "situational_awareness", "name": "Situational Awareness and Adaptability", "level": 3,
         "children": kids("move_along_wall")},
        {"id": "cooperation", "name": "Cooperation", "level": 2,
         "children": kids("entrance_vectors", "teammate_coverage")},
        {"id": "role_clarity", "name": "Role Clarity", "level": 3,
         "children": kids("identify_capture_pod", "pod_capture_time")},
        {"id": "other_execution", "name": "Other Drill Execution", "level": 3,
         "children": kids("entrance_hesitation", "threat_coverage", "total_floor_coverage_time")},
    ]
    return {
        "nodes": constructs + leaves,
        "smoothing": {"alpha_ceil": 1.0, "half_life": 3.0, "smooth_leaves": True},
        "bands": {"above_min": 0.8, "at_min": 0.5},
    }


def default_hierarchy() -> CtaHierarchy:
    return parse_hierarchy(default_hierarchy_dict())
