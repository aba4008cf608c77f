"""From edge probabilities to trajectories.

Greedy flow-constrained rounding keeps at most one accepted successor and
one accepted predecessor per node, merges the resulting chains, and repeats
level by level until whole-clip trajectories remain.  This path is
video-only by construction: no operation here takes the language embedding
store, and the whole pass runs under a guard that turns any stray embedding
access into a hard error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import (
    Detection,
    TrackGraph,
    Tracklet,
    aggregate_tracklet,
    build_graph,
    build_hierarchy,
    lift_detections,
    tracklet_sort_key,
)
from .guidance import language_access_forbidden
from .model import ModelParams, classify_edges, encode_graph, message_pass

__all__ = [
    "TrackerConfig",
    "TrackResult",
    "round_edges",
    "assign_ids",
    "track_video",
    "gt_oracle_scorer",
]

# An edge scorer maps a graph to one probability per edge; used to swap the
# learned classifier for an oracle in tests and diagnostics.
EdgeScorer = Callable[[TrackGraph], np.ndarray]


@dataclass
class TrackerConfig:
    """Inference-side knobs; model internals live in ModelConfig."""

    level_sizes: list[int] = field(default_factory=lambda: [5, 25, 75, 150])
    knn_k: int = 10
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0,1), got {self.threshold}")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")


@dataclass
class TrackResult:
    """Final trajectories keyed by track id (1..C)."""

    trajectories: dict[int, list[Detection]]

    def __post_init__(self):
        for tid, dets in self.trajectories.items():
            if tid < 1:
                raise ValueError(f"track ids must be positive, got {tid}")
            frames = [d.frame for d in dets]
            if any(b <= a for a, b in zip(frames, frames[1:])) or not frames:
                raise ValueError(f"trajectory {tid} frames must strictly increase")

    @property
    def num_tracks(self) -> int:
        return len(self.trajectories)

    def iter_detections(self):
        """Yield (track_id, detection) over all trajectories."""
        for tid in sorted(self.trajectories):
            for det in self.trajectories[tid]:
                yield tid, det


def round_edges(graph: TrackGraph, probs: np.ndarray, threshold: float) -> np.ndarray:
    """Greedy rounding under the one-successor/one-predecessor constraint.

    Edges are visited by descending probability (ties by frame gap, then
    endpoint indices); an edge is accepted iff its probability exceeds the
    threshold and both temporal slots are still free.  Returns accepted
    edge indices in ascending order.  The result is maximal: every rejected
    above-threshold edge conflicts with an accepted one.
    """
    p = np.asarray(probs, dtype=np.float64).ravel()
    if p.shape[0] != graph.num_edges:
        raise ValueError(f"{p.shape[0]} probs for {graph.num_edges} edges")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    if graph.num_edges == 0:
        return np.zeros(0, dtype=np.intp)
    starts = np.array([t.start_frame for t in graph.nodes])
    ends = np.array([t.end_frame for t in graph.nodes])
    gaps = starts[graph.edge_v] - ends[graph.edge_u]
    order = sorted(
        range(graph.num_edges),
        key=lambda i: (-p[i], int(gaps[i]), int(graph.edge_u[i]), int(graph.edge_v[i])),
    )
    succ_used: set[int] = set()
    pred_used: set[int] = set()
    accepted: list[int] = []
    for i in order:
        if p[i] <= threshold:
            break  # descending order: nothing below passes either
        u, v = int(graph.edge_u[i]), int(graph.edge_v[i])
        if u in succ_used or v in pred_used:
            continue
        succ_used.add(u)
        pred_used.add(v)
        accepted.append(i)
    out = np.array(sorted(accepted), dtype=np.intp)
    # one accepted edge per slot, by construction; keep the cheap assert
    assert len(succ_used) == len(accepted) and len(pred_used) == len(accepted)
    return out


def _components(n: int, pairs: Sequence[tuple[int, int]]) -> list[list[int]]:
    """Connected components as sorted index lists, via union-find."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in pairs:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _check_degrees(pairs: Sequence[tuple[int, int]]) -> None:
    succ: set[int] = set()
    pred: set[int] = set()
    for u, v in pairs:
        if u in succ or v in pred:
            raise RuntimeError("accepted edges violate the one-per-slot degree constraint")
        succ.add(u)
        pred.add(v)


def merge_accepted(graph: TrackGraph, accepted: np.ndarray) -> list[Tracklet]:
    """Merge chains of accepted edges into longer tracklets."""
    pairs = [(int(graph.edge_u[i]), int(graph.edge_v[i])) for i in accepted]
    _check_degrees(pairs)
    merged = [
        aggregate_tracklet([graph.nodes[i] for i in comp])
        for comp in _components(graph.num_nodes, pairs)
    ]
    return sorted(merged, key=tracklet_sort_key)


def assign_ids(
    tracklets: Sequence[Tracklet], accepted_edges: Sequence[tuple[int, int]]
) -> TrackResult:
    """Components under accepted edges become tracks, ids 1..C by start frame."""
    _check_degrees(accepted_edges)
    merged = [
        aggregate_tracklet([tracklets[i] for i in comp])
        for comp in _components(len(tracklets), accepted_edges)
    ]
    merged.sort(key=tracklet_sort_key)
    return TrackResult({tid: t.detections for tid, t in enumerate(merged, start=1)})


def gt_oracle_scorer(graph: TrackGraph) -> np.ndarray:
    """Probability 1 iff both endpoints carry the same ground-truth id."""
    out = np.zeros(graph.num_edges)
    for i in range(graph.num_edges):
        gu = graph.nodes[int(graph.edge_u[i])].gt_id
        gv = graph.nodes[int(graph.edge_v[i])].gt_id
        if gu is not None and gu == gv:
            out[i] = 1.0
    return out


def _detection_sort_key(d: Detection):
    return (
        d.frame,
        d.box,
        d.confidence,
        d.visibility,
        d.gt_id is None,
        d.gt_id or 0,
        d.appearance.tobytes(),
    )


def track_video(
    detections: Sequence[Detection],
    params: ModelParams | None,
    config: TrackerConfig,
    edge_scorer: EdgeScorer | None = None,
) -> TrackResult:
    """Hierarchical tracking over a whole clip.

    Each level tiles the clip into windows, classifies candidate edges
    inside every window, rounds them, and merges the resulting chains; the
    next level sees the merged tracklets.  `edge_scorer` replaces the
    learned classifier when given (params may then be None).  Language
    embeddings are unreachable from here.
    """
    if not detections:
        raise ValueError("track_video needs at least one detection")
    if edge_scorer is None and params is None:
        raise ValueError("either model params or an edge scorer is required")
    dets = sorted(detections, key=_detection_sort_key)
    schedule = build_hierarchy(max(d.frame for d in dets), config.level_sizes)
    tracklets = lift_detections(dets)
    with language_access_forbidden():
        for windows in schedule.levels:
            next_level: list[Tracklet] = []
            for window in windows:
                members = [
                    t for t in tracklets
                    if window[0] <= t.start_frame and t.end_frame <= window[1]
                ]
                if not members:
                    continue
                graph = build_graph(members, config.knn_k, window)
                if edge_scorer is None:
                    eg = encode_graph(graph, params)
                    for i, node in enumerate(graph.nodes):
                        node.node_embedding = eg.node_phi.data[i].copy()
                    steps = params.config.message_passing_steps
                    if graph.num_edges:
                        eg = message_pass(eg, params, steps)
                        probs = classify_edges(eg, params).data.ravel()
                    else:
                        probs = np.zeros(0)
                else:
                    probs = np.asarray(edge_scorer(graph), dtype=np.float64).ravel()
                    if np.any(probs < 0.0) or np.any(probs > 1.0):
                        raise ValueError("edge scorer produced probabilities outside [0,1]")
                accepted = round_edges(graph, probs, config.threshold)
                next_level.extend(merge_accepted(graph, accepted))
            tracklets = next_level
    return assign_ids(tracklets, [])
