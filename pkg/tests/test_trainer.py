"""Training loop: labels, teacher forcing, gradient flow, reproducibility."""

import numpy as np
import pytest

from langtrack.data_io import AnnotationSet, InstanceAttributes, SceneAttributes
from langtrack.graph import Detection, Tracklet, build_graph
from langtrack.metrics import MetricReport
from langtrack.model import ModelConfig, init_model
from langtrack.synth import SynthConfig, embedding_store_for, gen_sequence, identity_profile
from langtrack.trainer import (
    ClipData,
    ExperimentSpec,
    TrainConfig,
    edge_labels,
    prepare_clip,
    run_experiment,
    run_training,
    train_step,
)

SCENE = SceneAttributes("medium", "static", "on a sunny day")

MODEL_CFG = ModelConfig(
    message_passing_steps=2, edge_dim=8, text_dim=8, node_dim=16, appearance_dim=8
)


def small_train_cfg(**overrides) -> TrainConfig:
    base = dict(
        level_sizes=(5, 10, 20),
        batch_clips=2,
        epochs=2,
        lr=3e-3,
        weight_decay=1e-4,
        focal_gamma=1.0,
        alpha=1.0,
        beta=1.0,
        knn_k=3,
        message_passing_steps=2,
        seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


def synth_clip(name: str, seed: int, num_objects: int = 2, num_frames: int = 20) -> ClipData:
    cfg = SynthConfig(
        num_objects=num_objects,
        num_frames=num_frames,
        appearance_dim=8,
        seed=seed,
    )
    domain = identity_profile("plain", SCENE, 8)
    detections, annotations = gen_sequence(cfg, domain)
    return ClipData(name, detections, annotations)


def store_for(*clips: ClipData):
    return embedding_store_for([c.annotations for c in clips], dim=8)


def det(frame: int, gt_id: int, x: float = 0.0) -> Detection:
    return Detection(frame, (x, 0.0, 10.0, 10.0), np.ones(8), gt_id=gt_id)


class TestEdgeLabels:
    def test_consecutive_same_id_edges_positive(self):
        tracklets = [
            Tracklet([det(1, 1)]), Tracklet([det(2, 1)]), Tracklet([det(3, 1)]),
        ]
        graph = build_graph(tracklets, knn_k=5, window=(1, 3))
        labels = edge_labels(graph)
        for e in range(graph.num_edges):
            u, v = graph.nodes[int(graph.edge_u[e])], graph.nodes[int(graph.edge_v[e])]
            expected = 1.0 if v.start_frame == u.start_frame + 1 else 0.0
            assert labels[e] == expected

    def test_skip_edge_negative_when_same_id_intervenes(self):
        tracklets = [Tracklet([det(1, 1)]), Tracklet([det(2, 1)]), Tracklet([det(5, 1)])]
        graph = build_graph(tracklets, knn_k=5, window=(1, 5))
        labels = edge_labels(graph)
        skip = [
            e for e in range(graph.num_edges)
            if graph.nodes[int(graph.edge_u[e])].start_frame == 1
            and graph.nodes[int(graph.edge_v[e])].start_frame == 5
        ]
        assert skip and all(labels[e] == 0.0 for e in skip)

    def test_cross_identity_edges_negative(self):
        tracklets = [
            Tracklet([det(1, 1)]), Tracklet([det(1, 2, x=50.0)]),
            Tracklet([det(2, 1)]), Tracklet([det(2, 2, x=50.0)]),
        ]
        graph = build_graph(tracklets, knn_k=5, window=(1, 2))
        labels = edge_labels(graph)
        for e in range(graph.num_edges):
            u, v = graph.nodes[int(graph.edge_u[e])], graph.nodes[int(graph.edge_v[e])]
            assert labels[e] == (1.0 if u.gt_id == v.gt_id else 0.0)

    def test_explicit_ids_override_node_ids(self):
        tracklets = [Tracklet([det(1, 1)]), Tracklet([det(2, 2, x=50.0)])]
        graph = build_graph(tracklets, knn_k=2, window=(1, 2))
        assert edge_labels(graph).sum() == 0.0
        same = edge_labels(graph, [7] * graph.num_nodes)
        assert same.sum() == 1.0

    def test_missing_identity_rejected(self):
        tracklets = [Tracklet([det(1, 1)]), Tracklet([Detection(2, (0, 0, 10, 10), np.ones(8))])]
        graph = build_graph(tracklets, knn_k=2, window=(1, 2))
        with pytest.raises(ValueError):
            edge_labels(graph)

    def test_id_list_length_checked(self):
        graph = build_graph([Tracklet([det(1, 1)]), Tracklet([det(2, 1)])], 2, (1, 2))
        with pytest.raises(ValueError):
            edge_labels(graph, [1])


class TestPrepareClip:
    def bundle(self, clip=None, cfg=None):
        clip = clip or synth_clip("a", seed=3)
        cfg = cfg or small_train_cfg()
        return clip, prepare_clip(clip, cfg, store_for(clip))

    def test_level_node_counts_follow_hierarchy(self):
        # 2 objects, 20 frames, levels (5, 10, 20): fragments per level are
        # grouped by the previous level's windows, so 40, 8, then 4 nodes.
        _, bundle = self.bundle()
        assert [b.graph.num_nodes for b in bundle.levels] == [40, 8, 4]

    def test_every_level_has_positive_and_negative_labels(self):
        _, bundle = self.bundle()
        for level in bundle.levels:
            assert level.labels.shape == (level.graph.num_edges,)
            assert level.labels.min() == 0.0 and level.labels.max() == 1.0

    def test_averaging_rows_are_detection_means(self):
        clip, bundle = self.bundle()
        for level in bundle.levels:
            rows = level.averaging
            assert rows.shape == (level.graph.num_nodes, len(clip.detections))
            np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
            merged = rows @ bundle.appearance
            for i, node in enumerate(level.graph.nodes):
                direct = np.mean([d.appearance for d in node.detections], axis=0)
                np.testing.assert_allclose(merged[i], direct, atol=1e-12)

    def test_instance_targets_match_store(self):
        from langtrack.data_io import compose_instance_description

        clip, bundle = self.bundle()
        store = store_for(clip)
        for level in bundle.levels:
            for i, node in enumerate(level.graph.nodes):
                desc = compose_instance_description(clip.annotations.instances[node.gt_id])
                np.testing.assert_array_equal(level.instance_targets[i], store.lookup(desc))

    def test_edges_stay_inside_level_windows(self):
        # union graphs batch per-window subgraphs; no edge may cross windows
        _, bundle = self.bundle()
        sizes = (5, 10, 20)
        for size, level in zip(sizes, bundle.levels):
            for e in range(level.graph.num_edges):
                u = level.graph.nodes[int(level.graph.edge_u[e])]
                v = level.graph.nodes[int(level.graph.edge_v[e])]
                wu = (u.start_frame - 1) // size
                wv = (v.end_frame - 1) // size
                assert wu == wv

    def test_unlabeled_detections_rejected(self):
        clip = synth_clip("a", seed=3)
        clip.detections[0] = Detection(
            clip.detections[0].frame, clip.detections[0].box, clip.detections[0].appearance
        )
        with pytest.raises(ValueError):
            prepare_clip(clip, small_train_cfg(), store_for(clip))

    def test_missing_annotation_rejected(self):
        clip = synth_clip("a", seed=3)
        clip.annotations = AnnotationSet(SCENE, {1: clip.annotations.instances[1]})
        with pytest.raises(KeyError):
            prepare_clip(clip, small_train_cfg(), store_for(clip))

    def test_empty_clip_rejected(self):
        clip = ClipData("x", [], AnnotationSet(SCENE, {1: InstanceAttributes("man", "red", "blue")}))
        with pytest.raises(ValueError):
            prepare_clip(clip, small_train_cfg(), store_for(synth_clip("a", 3)))


class TestTrainStep:
    def setup_bundles(self, cfg, seeds=(3, 4)):
        clips = [synth_clip(f"c{s}", seed=s) for s in seeds]
        store = store_for(*clips)
        bundles = [prepare_clip(c, cfg, store) for c in clips]
        params = init_model(np.random.default_rng(0), MODEL_CFG)
        return bundles, params

    def test_components_sum_to_total(self):
        cfg = small_train_cfg(alpha=0.7, beta=0.3)
        bundles, params = self.setup_bundles(cfg)
        from langtrack.nn import AdamState

        out = train_step(bundles, params, AdamState(lr=cfg.lr), cfg)
        assert set(out) == {"lc", "isg", "spg", "total"}
        assert out["total"] == pytest.approx(
            out["lc"] + 0.7 * out["isg"] + 0.3 * out["spg"], abs=1e-12
        )
        assert out["isg"] > 0.0 and out["spg"] > 0.0

    def test_guidance_off_total_equals_lc(self):
        cfg = small_train_cfg(alpha=0.0, beta=0.0)
        bundles, params = self.setup_bundles(cfg)
        from langtrack.nn import AdamState

        out = train_step(bundles, params, AdamState(lr=cfg.lr), cfg)
        assert out["isg"] == 0.0 and out["spg"] == 0.0
        assert out["total"] == out["lc"]

    def test_loss_decreases_over_training(self):
        cfg = small_train_cfg()
        bundles, params = self.setup_bundles(cfg)
        from langtrack.nn import AdamState

        opt = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
        totals = [train_step(bundles, params, opt, cfg)["total"] for _ in range(50)]
        assert np.mean(totals[-10:]) < np.mean(totals[:10])

    def test_empty_batch_rejected(self):
        cfg = small_train_cfg()
        _, params = self.setup_bundles(cfg)
        from langtrack.nn import AdamState

        with pytest.raises(ValueError):
            train_step([], params, AdamState(), cfg)


class TestGradientFlow:
    """Which blocks move under each loss term (weight decay off)."""

    def run_one(self, alpha, beta):
        cfg = small_train_cfg(alpha=alpha, beta=beta, weight_decay=0.0)
        clip = synth_clip("a", seed=3)
        bundle = prepare_clip(clip, cfg, store_for(clip))
        params = init_model(np.random.default_rng(0), MODEL_CFG)
        from langtrack.nn import AdamState

        train_step([bundle], params, AdamState(lr=cfg.lr, weight_decay=0.0), cfg)
        return {k: t.data.copy() for k, t in params.named_tensors().items()}

    @staticmethod
    def block_moved(before, after, block):
        keys = [k for k in before if k.startswith(block + ".")]
        assert keys
        return any(not np.array_equal(before[k], after[k]) for k in keys)

    def test_instance_term_reaches_encoder_and_its_projection(self):
        base = {
            k: t.data.copy()
            for k, t in init_model(np.random.default_rng(0), MODEL_CFG).named_tensors().items()
        }
        plain = self.run_one(0.0, 0.0)
        with_isg = self.run_one(1.0, 0.0)
        assert self.block_moved(base, with_isg, "isg_projection")
        assert not self.block_moved(base, plain, "isg_projection")
        assert any(
            not np.array_equal(plain[k], with_isg[k])
            for k in plain if k.startswith("node_encoder.")
        )

    def test_scene_term_reaches_edge_blocks_and_its_projection(self):
        base = {
            k: t.data.copy()
            for k, t in init_model(np.random.default_rng(0), MODEL_CFG).named_tensors().items()
        }
        plain = self.run_one(0.0, 0.0)
        with_spg = self.run_one(0.0, 1.0)
        assert self.block_moved(base, with_spg, "spg_projection")
        assert not self.block_moved(base, plain, "spg_projection")
        assert any(
            not np.array_equal(plain[k], with_spg[k])
            for k in plain if k.startswith("edge_update.")
        )

    def test_store_vectors_never_change(self):
        clip = synth_clip("a", seed=3)
        store = store_for(clip)
        snapshot = {d: store.lookup(d).copy() for d in store.descriptions()}
        cfg = small_train_cfg(epochs=2)
        run_training([clip], cfg, MODEL_CFG, store)
        for d, vec in snapshot.items():
            np.testing.assert_array_equal(store.lookup(d), vec)


class TestRunTraining:
    def test_same_seed_reproduces_bitwise(self):
        clips = [synth_clip("a", 3), synth_clip("b", 4)]
        store = store_for(*clips)
        cfg = small_train_cfg(epochs=2)
        p1, h1 = run_training(clips, cfg, MODEL_CFG, store)
        p2, h2 = run_training(clips, cfg, MODEL_CFG, store)
        assert h1 == h2
        for k, t in p1.named_tensors().items():
            np.testing.assert_array_equal(t.data, p2.named_tensors()[k].data)

    def test_seed_changes_trajectory(self):
        clips = [synth_clip("a", 3)]
        store = store_for(*clips)
        p1, _ = run_training(clips, small_train_cfg(epochs=1, seed=0), MODEL_CFG, store)
        p2, _ = run_training(clips, small_train_cfg(epochs=1, seed=1), MODEL_CFG, store)
        assert any(
            not np.array_equal(t.data, p2.named_tensors()[k].data)
            for k, t in p1.named_tensors().items()
        )

    def test_zero_epochs_returns_initialization(self):
        clips = [synth_clip("a", 3)]
        store = store_for(*clips)
        params, history = run_training(clips, small_train_cfg(epochs=0), MODEL_CFG, store)
        assert history == []
        fresh = init_model(np.random.default_rng(0), MODEL_CFG)
        for k, t in params.named_tensors().items():
            np.testing.assert_array_equal(t.data, fresh.named_tensors()[k].data)

    def test_zero_weights_match_disabled_guidance_bitwise(self):
        # the zero-weight run and a run with the guidance machinery switched
        # off must produce identical parameter trajectories
        clips = [synth_clip("a", 3), synth_clip("b", 4)]
        store = store_for(*clips)
        weights_off = small_train_cfg(epochs=2, alpha=0.0, beta=0.0)
        module_off = small_train_cfg(epochs=2, alpha=1.0, beta=1.0, guidance_enabled=False)
        p1, h1 = run_training(clips, weights_off, MODEL_CFG, store)
        p2, h2 = run_training(clips, module_off, MODEL_CFG, store=None)
        assert h1 == h2
        assert all(step["total"] == step["lc"] for step in h1)
        for k, t in p1.named_tensors().items():
            np.testing.assert_array_equal(t.data, p2.named_tensors()[k].data)

    def test_guidance_without_store_rejected(self):
        with pytest.raises(ValueError):
            run_training([synth_clip("a", 3)], small_train_cfg(), MODEL_CFG, store=None)

    def test_history_length_counts_batches(self):
        clips = [synth_clip(f"c{i}", seed=i) for i in range(3)]
        store = store_for(*clips)
        cfg = small_train_cfg(epochs=2, batch_clips=2)
        _, history = run_training(clips, cfg, MODEL_CFG, store)
        assert len(history) == 4  # ceil(3 / 2) = 2 batches per epoch


class TestRunExperiment:
    def spec(self):
        train = [synth_clip("train0", 3), synth_clip("train1", 4)]
        eval_in = [synth_clip("in0", 10)]
        eval_cross = [synth_clip("cross0", 11)]
        store = store_for(*train)
        return ExperimentSpec(train, eval_in, eval_cross, store, seeds=(0,))

    def test_runs_both_arms_and_writes_artifacts(self, tmp_path):
        cfg = small_train_cfg(epochs=1)
        results = run_experiment(self.spec(), cfg, MODEL_CFG, out_dir=tmp_path)
        assert set(results) == {0}
        assert set(results[0]) == {"baseline", "guided"}
        for arm in results[0].values():
            assert set(arm) == {"in_domain", "cross_domain"}
            for report in arm.values():
                assert isinstance(report, MetricReport)
                assert np.isfinite(report.idf1)
        for name in (
            "checkpoint_seed0_baseline.json",
            "checkpoint_seed0_guided.json",
            "report_seed0_guided_cross_domain.txt",
            "comparison.txt",
            "comparison.csv",
        ):
            assert (tmp_path / name).exists()
        csv_lines = (tmp_path / "comparison.csv").read_text().splitlines()
        assert csv_lines[0] == "arm,domain,seed,mota,idf1,hota"
        assert len(csv_lines) == 5

    def test_no_output_dir_returns_results_only(self):
        cfg = small_train_cfg(epochs=1)
        results = run_experiment(self.spec(), cfg, MODEL_CFG)
        assert results[0]["guided"]["in_domain"].num_gt > 0

    def test_baseline_can_be_skipped(self):
        spec = self.spec()
        spec.include_baseline = False
        results = run_experiment(spec, small_train_cfg(epochs=1), MODEL_CFG)
        assert set(results[0]) == {"guided"}

    def test_train_eval_name_overlap_rejected(self):
        train = [synth_clip("a", 3)]
        with pytest.raises(ValueError):
            ExperimentSpec(train, [synth_clip("a", 4)], [], store_for(*train))

    def test_duplicate_train_names_rejected(self):
        clips = [synth_clip("a", 3), synth_clip("a", 4)]
        with pytest.raises(ValueError):
            ExperimentSpec(clips, [], [], store_for(*clips))

    def test_empty_seeds_rejected(self):
        train = [synth_clip("a", 3)]
        with pytest.raises(ValueError):
            ExperimentSpec(train, [], [], store_for(*train), seeds=())
