"""Training loop and the intra-/cross-domain experiment driver.

Training is teacher-forced across the hierarchy: at level L every object
contributes one tracklet per level L-1 window (single detections at the
bottom), graphs are built per level-L window and batched into one
disconnected union graph per level.  Tracklet embeddings are
detection-encoding means, expressed as a constant averaging matrix times
the encoder output so gradients reach the encoder.  The loss per clip is
the sum over levels of focal classification loss plus the weighted
instance- and scene-distillation terms; a batch averages clips and takes
one Adam step.  Zero guidance weights skip the guidance computation
entirely, which keeps the parameter trajectory bit-identical to a build
without the guidance terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tensor, as_tensor
from .data_io import (
    AnnotationSet,
    compose_instance_description,
    compose_scene_description,
)
from .graph import Detection, TrackGraph, Tracklet, build_graph, build_hierarchy
from .guidance import (
    GuidanceConfig,
    LanguageEmbeddingStore,
    isg_loss,
    spg_loss,
    total_loss,
)
from .inference import TrackerConfig, track_video
from .metrics import (
    BoxRecord,
    MetricReport,
    evaluate_sequences,
    records_from_result,
    render_report,
    render_table,
)
from .model import (
    ModelConfig,
    ModelParams,
    classify_edges,
    encode_graph,
    init_model,
    message_pass,
    project_edges_for_spg,
    project_nodes_for_isg,
)
from .nn import AdamState, adam_step, focal_bce_tape, mlp_forward, save_checkpoint

__all__ = [
    "TrainConfig",
    "ClipData",
    "ClipBundle",
    "ExperimentSpec",
    "edge_labels",
    "prepare_clip",
    "train_step",
    "run_training",
    "run_experiment",
]


@dataclass(frozen=True)
class TrainConfig:
    level_sizes: tuple[int, ...] = (5, 25, 75, 150)
    batch_clips: int = 8
    epochs: int = 30
    lr: float = 3e-4
    weight_decay: float = 1e-4
    focal_gamma: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    knn_k: int = 10
    message_passing_steps: int = 8
    threshold: float = 0.5
    seed: int = 0
    guidance_enabled: bool = True

    def __post_init__(self):
        if self.batch_clips < 1:
            raise ValueError("batch_clips must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.weight_decay < 0 or self.focal_gamma < 0:
            raise ValueError("weight_decay and focal_gamma must be >= 0")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.knn_k < 1 or self.message_passing_steps < 1:
            raise ValueError("knn_k and message_passing_steps must be >= 1")

    @property
    def use_guidance(self) -> bool:
        return self.guidance_enabled and (self.alpha > 0.0 or self.beta > 0.0)


@dataclass
class ClipData:
    """One training clip: labeled detections plus its annotations."""

    name: str
    detections: list[Detection]
    annotations: AnnotationSet


@dataclass
class _LevelBundle:
    graph: TrackGraph
    averaging: np.ndarray  # (nodes, detections), rows sum to 1
    labels: np.ndarray  # (edges,)
    instance_targets: np.ndarray  # (nodes, text_dim)


@dataclass
class ClipBundle:
    """Constant per-clip training structure, built once and reused."""

    name: str
    appearance: np.ndarray  # (detections, appearance_dim)
    levels: list[_LevelBundle]
    scene_embedding: np.ndarray


def edge_labels(graph: TrackGraph, gt_ids: Sequence[int | None] | None = None) -> np.ndarray:
    """1 for edges joining temporally consecutive same-identity nodes.

    Consecutive means no other node of the same identity starts between
    the two; every other edge is 0.
    """
    if gt_ids is None:
        gt_ids = [node.gt_id for node in graph.nodes]
    if len(gt_ids) != len(graph.nodes):
        raise ValueError(f"{len(gt_ids)} gt ids for {len(graph.nodes)} nodes")
    if any(g is None for g in gt_ids):
        raise ValueError("every node needs a ground-truth id for labeling")
    by_id: dict[int, list[int]] = {}
    for idx, gid in enumerate(gt_ids):
        by_id.setdefault(int(gid), []).append(idx)
    successor: dict[int, int] = {}
    for gid, indices in by_id.items():
        indices.sort(key=lambda i: (graph.nodes[i].start_frame, graph.nodes[i].end_frame))
        for a, b in zip(indices, indices[1:]):
            successor[a] = b
    labels = np.zeros(graph.num_edges)
    for e in range(graph.num_edges):
        u = int(graph.edge_u[e])
        v = int(graph.edge_v[e])
        if successor.get(u) == v:
            labels[e] = 1.0
    return labels


def _union_graph(
    graphs: list[TrackGraph],
    det_indices: list[list[int]],
    frame_span: tuple[int, int],
    num_detections: int,
) -> tuple[TrackGraph, np.ndarray]:
    """Batch window graphs into one disconnected graph plus its averaging matrix."""
    nodes: list[Tracklet] = []
    edge_u: list[np.ndarray] = []
    edge_v: list[np.ndarray] = []
    feats: list[np.ndarray] = []
    for g in graphs:
        offset = len(nodes)
        nodes.extend(g.nodes)
        edge_u.append(g.edge_u + offset)
        edge_v.append(g.edge_v + offset)
        feats.append(g.edge_features)
    union = TrackGraph(
        nodes=nodes,
        edge_u=np.concatenate(edge_u) if edge_u else np.zeros(0, dtype=np.intp),
        edge_v=np.concatenate(edge_v) if edge_v else np.zeros(0, dtype=np.intp),
        edge_features=np.vstack(feats) if feats else np.zeros((0, 6)),
        frame_span=frame_span,
    )
    averaging = np.zeros((len(nodes), num_detections))
    for row, indices in enumerate(det_indices):
        averaging[row, indices] = 1.0 / len(indices)
    return union, averaging


def prepare_clip(
    clip: ClipData,
    cfg: TrainConfig,
    store: LanguageEmbeddingStore,
) -> ClipBundle:
    """Precompute the teacher-forced hierarchy, labels, and loss targets."""
    dets = sorted(clip.detections, key=lambda d: (d.frame, d.gt_id if d.gt_id is not None else -1))
    if not dets:
        raise ValueError(f"clip {clip.name!r} has no detections")
    if any(d.gt_id is None for d in dets):
        raise ValueError(f"clip {clip.name!r} has detections without gt ids")
    num_frames = max(d.frame for d in dets)
    schedule = build_hierarchy(num_frames, list(cfg.level_sizes))
    appearance = np.stack([d.appearance for d in dets])
    instance_vectors: dict[int, np.ndarray] = {}
    for gid in sorted({d.gt_id for d in dets}):
        if gid not in clip.annotations.instances:
            raise KeyError(f"clip {clip.name!r}: no instance annotation for gt id {gid}")
        desc = compose_instance_description(clip.annotations.instances[gid])
        instance_vectors[gid] = store.lookup(desc)
    scene_embedding = store.lookup(compose_scene_description(clip.annotations.scene))
    levels: list[_LevelBundle] = []
    for li in range(len(cfg.level_sizes)):
        if li == 0:
            prev_windows = [(f, f) for f in range(1, num_frames + 1)]
        else:
            prev_windows = schedule.levels[li - 1]
        fragments: list[tuple[Tracklet, list[int]]] = []
        for lo, hi in prev_windows:
            by_gt: dict[int, list[int]] = {}
            for idx, d in enumerate(dets):
                if lo <= d.frame <= hi:
                    by_gt.setdefault(d.gt_id, []).append(idx)
            for gid in sorted(by_gt):
                indices = sorted(by_gt[gid], key=lambda i: dets[i].frame)
                fragments.append((Tracklet([dets[i] for i in indices]), indices))
        graphs: list[TrackGraph] = []
        det_indices: list[list[int]] = []
        for lo, hi in schedule.levels[li]:
            in_window = [
                (t, idxs) for t, idxs in fragments
                if lo <= t.start_frame and t.end_frame <= hi
            ]
            if not in_window:
                continue
            window_graph = build_graph([t for t, _ in in_window], cfg.knn_k, (lo, hi))
            index_of = {id(t): idxs for t, idxs in in_window}
            graphs.append(window_graph)
            det_indices.extend(index_of[id(t)] for t in window_graph.nodes)
        union, averaging = _union_graph(graphs, det_indices, (1, num_frames), len(dets))
        targets = np.stack(
            [instance_vectors[node.gt_id] for node in union.nodes]
        ) if union.nodes else np.zeros((0, scene_embedding.size))
        levels.append(_LevelBundle(union, averaging, edge_labels(union), targets))
    return ClipBundle(clip.name, appearance, levels, scene_embedding)


def train_step(
    bundles: Sequence[ClipBundle],
    params: ModelParams,
    opt: AdamState,
    cfg: TrainConfig,
) -> dict[str, float]:
    """One optimizer step on a batch of prepared clips.

    Returns the loss components (lc, isg, spg, total) as floats.
    """
    if not bundles:
        raise ValueError("empty batch")
    params.zero_grad()
    inv_count = 1.0 / len(bundles)
    lc_sum: Tensor | None = None
    isg_sum: Tensor | None = None
    spg_sum: Tensor | None = None
    for bundle in bundles:
        enc = mlp_forward(params.node_encoder, as_tensor(bundle.appearance))
        for level in bundle.levels:
            if not level.graph.nodes:
                continue
            phi = as_tensor(level.averaging) @ enc
            eg = encode_graph(level.graph, params, node_init=phi)
            if cfg.use_guidance and cfg.alpha > 0.0:
                term = isg_loss(project_nodes_for_isg(eg, params), level.instance_targets)
                isg_sum = term.value if isg_sum is None else isg_sum + term.value
            if level.graph.num_edges == 0:
                continue
            eg = message_pass(eg, params, cfg.message_passing_steps)
            probs = classify_edges(eg, params)
            lc_level = focal_bce_tape(probs, level.labels, cfg.focal_gamma)
            lc_sum = lc_level if lc_sum is None else lc_sum + lc_level
            if cfg.use_guidance and cfg.beta > 0.0:
                term = spg_loss(project_edges_for_spg(eg, params), bundle.scene_embedding)
                spg_sum = term.value if spg_sum is None else spg_sum + term.value
    if lc_sum is None:
        raise ValueError("batch produced no classifiable edges")
    lc = lc_sum * inv_count
    if cfg.use_guidance:
        isg = isg_sum * inv_count if isg_sum is not None else Tensor(0.0)
        spg = spg_sum * inv_count if spg_sum is not None else Tensor(0.0)
        gcfg = GuidanceConfig(alpha=cfg.alpha, beta=cfg.beta)
        total = total_loss(lc, isg, spg, gcfg)
        components = {
            "lc": lc.item(), "isg": isg.item(), "spg": spg.item(), "total": total.item(),
        }
    else:
        total = lc
        components = {"lc": lc.item(), "isg": 0.0, "spg": 0.0, "total": lc.item()}
    total.backward()
    adam_step(params.named_tensors(), opt)
    return components


def run_training(
    clips: Sequence[ClipData],
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    store: LanguageEmbeddingStore | None,
    params: ModelParams | None = None,
) -> tuple[ModelParams, list[dict[str, float]]]:
    """Full training run: shuffled batches, one Adam step per batch.

    The store may be None only when guidance is off.
    """
    if cfg.use_guidance and store is None:
        raise ValueError("guidance requires an embedding store")
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_model(rng, model_cfg)
    if store is None:
        # labels and graphs never need text; reuse a placeholder-free path
        bundles = [prepare_clip(c, cfg, _ZeroStore(model_cfg.text_dim)) for c in clips]
    else:
        bundles = [prepare_clip(c, cfg, store) for c in clips]
    opt = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    history: list[dict[str, float]] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(bundles))
        for start in range(0, len(bundles), cfg.batch_clips):
            batch = [bundles[int(i)] for i in order[start:start + cfg.batch_clips]]
            history.append(train_step(batch, params, opt, cfg))
    return params, history


class _ZeroStore:
    """Stands in for the embedding store when guidance is disabled."""

    def __init__(self, dim: int):
        self._dim = dim

    def lookup(self, description: str) -> np.ndarray:
        return np.zeros(self._dim)


@dataclass
class ExperimentSpec:
    """Data and protocol for one baseline-vs-guided comparison."""

    train_clips: list[ClipData]
    eval_in_domain: list[ClipData]
    eval_cross_domain: list[ClipData]
    store: LanguageEmbeddingStore
    seeds: tuple[int, ...] = (0,)
    include_baseline: bool = True
    metrics: tuple[str, ...] = ("mota", "idf1", "hota")

    def __post_init__(self):
        train_names = {c.name for c in self.train_clips}
        if len(train_names) != len(self.train_clips):
            raise ValueError("duplicate training clip names")
        for group in (self.eval_in_domain, self.eval_cross_domain):
            overlap = train_names & {c.name for c in group}
            if overlap:
                raise ValueError(f"train and eval sequences overlap: {sorted(overlap)}")
        if not self.seeds:
            raise ValueError("at least one seed required")


def _gt_records(detections: Sequence[Detection]) -> list[BoxRecord]:
    return [BoxRecord(d.frame, d.gt_id, tuple(d.box)) for d in detections]


def _evaluate_arm(
    params: ModelParams,
    sequences: Sequence[ClipData],
    cfg: TrainConfig,
) -> MetricReport:
    tracker_cfg = TrackerConfig(
        level_sizes=list(cfg.level_sizes),
        knn_k=cfg.knn_k,
        threshold=cfg.threshold,
    )
    pooled = {}
    for clip in sequences:
        result = track_video(clip.detections, params, tracker_cfg)
        pooled[clip.name] = (_gt_records(clip.detections), records_from_result(result))
    return evaluate_sequences(pooled)


def run_experiment(
    spec: ExperimentSpec,
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    out_dir: str | Path | None = None,
) -> dict[int, dict[str, dict[str, MetricReport]]]:
    """Train both arms per seed and evaluate in- and cross-domain.

    Returns results[seed][arm][domain]; arms are "guided" and (when
    requested) "baseline", domains are "in_domain" and "cross_domain".
    Writes checkpoints, per-run reports, and comparison tables when an
    output directory is given.
    """
    arms = [("guided", cfg.alpha, cfg.beta)]
    if spec.include_baseline:
        arms.insert(0, ("baseline", 0.0, 0.0))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    results: dict[int, dict[str, dict[str, MetricReport]]] = {}
    for seed in spec.seeds:
        results[seed] = {}
        for arm_name, alpha, beta in arms:
            arm_cfg = TrainConfig(
                level_sizes=cfg.level_sizes,
                batch_clips=cfg.batch_clips,
                epochs=cfg.epochs,
                lr=cfg.lr,
                weight_decay=cfg.weight_decay,
                focal_gamma=cfg.focal_gamma,
                alpha=alpha,
                beta=beta,
                knn_k=cfg.knn_k,
                message_passing_steps=cfg.message_passing_steps,
                threshold=cfg.threshold,
                seed=seed,
                guidance_enabled=cfg.guidance_enabled,
            )
            params, _ = run_training(spec.train_clips, arm_cfg, model_cfg, spec.store)
            reports = {
                "in_domain": _evaluate_arm(params, spec.eval_in_domain, arm_cfg),
                "cross_domain": _evaluate_arm(params, spec.eval_cross_domain, arm_cfg),
            }
            results[seed][arm_name] = reports
            if out is not None:
                save_checkpoint(
                    out / f"checkpoint_seed{seed}_{arm_name}.json",
                    params.named_tensors(),
                    {"model": model_cfg.to_dict(), "seed": seed, "arm": arm_name},
                )
                for domain, report in reports.items():
                    path = out / f"report_seed{seed}_{arm_name}_{domain}.txt"
                    path.write_text(render_report(report))
    if out is not None:
        table = {
            f"{arm}-{domain}-seed{seed}": results[seed][arm][domain]
            for seed in spec.seeds
            for arm in results[seed]
            for domain in ("in_domain", "cross_domain")
        }
        (out / "comparison.txt").write_text(render_table(table))
        (out / "comparison.csv").write_text(_comparison_csv(results, spec))
    return results


def _comparison_csv(
    results: dict[int, dict[str, dict[str, MetricReport]]],
    spec: ExperimentSpec,
) -> str:
    columns = list(spec.metrics)
    lines = ["arm,domain,seed," + ",".join(columns)]
    for seed in spec.seeds:
        for arm in sorted(results[seed]):
            for domain in ("in_domain", "cross_domain"):
                report = results[seed][arm][domain]
                values = ",".join(repr(getattr(report, c)) for c in columns)
                lines.append(f"{arm},{domain},{seed},{values}")
    return "\n".join(lines) + "\n"
