"""Model forward semantics: oracles, equivariance, state errors."""

import numpy as np
import pytest

from langtrack.autodiff import Tensor
from langtrack.graph import Detection, TrackGraph, Tracklet, build_graph
from langtrack.model import (
    EncodedGraph,
    ModelConfig,
    ModelParams,
    classify_edges,
    encode_graph,
    init_model,
    message_pass,
    params_from_tensors,
    project_edges_for_spg,
    project_nodes_for_isg,
)

CFG = ModelConfig(
    message_passing_steps=2, edge_dim=4, text_dim=3, node_dim=8, appearance_dim=5
)


def single(frame, x=0.0, app=None, rng=None):
    if app is None:
        app = rng.standard_normal(CFG.appearance_dim) if rng is not None else np.ones(5)
    return Tracklet([Detection(frame, (x, 0.0, 2.0, 4.0), np.asarray(app, float))])


def path_graph(rng, n=3):
    tracklets = [single(i + 1, x=3.0 * i, rng=rng) for i in range(n)]
    return build_graph(tracklets, knn_k=2, window=(1, n))


def zero_params(cfg=CFG):
    params = init_model(np.random.default_rng(0), cfg)
    for t in params.named_tensors().values():
        t.data = np.zeros_like(t.data)
    return params


def manual_mlp(mlp, x):
    h = x
    for layer in mlp.layers:
        h = h @ layer.w.data + layer.b.data
        if layer.activation == "relu":
            h = np.maximum(h, 0.0)
        elif layer.activation == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-h))
    return h


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(node_dim=0)
    with pytest.raises(ValueError):
        ModelConfig(message_passing_steps=0)


def test_encode_zero_weights_gives_zero_embeddings():
    rng = np.random.default_rng(1)
    g = path_graph(rng)
    eg = encode_graph(g, zero_params())
    assert np.all(eg.node_phi.data == 0.0)
    assert np.all(eg.edge_init.data == 0.0)
    assert eg.node_phi.shape == (3, CFG.node_dim)
    assert eg.edge_init.shape == (g.num_edges, CFG.edge_dim)


def test_encode_identical_detections_identical_embeddings():
    params = init_model(np.random.default_rng(2), CFG)
    app = np.arange(5, dtype=float)
    g = build_graph([single(1, app=app), single(2, app=app)], 2, (1, 2))
    eg = encode_graph(g, params)
    assert np.array_equal(eg.node_phi.data[0], eg.node_phi.data[1])


def test_encode_single_node_graph_has_no_edge_embeddings():
    params = init_model(np.random.default_rng(3), CFG)
    g = build_graph([single(1)], 2, (1, 1))
    eg = encode_graph(g, params)
    assert eg.edge_init.shape == (0, CFG.edge_dim)


def test_encode_prefers_stored_embedding_and_mixes_sources():
    params = init_model(np.random.default_rng(4), CFG)
    rng = np.random.default_rng(5)
    stored = single(1, rng=rng)
    stored.node_embedding = np.arange(CFG.node_dim, dtype=float)
    fresh = single(3, rng=rng)
    g = build_graph([stored, fresh], 2, (1, 3))
    eg = encode_graph(g, params)
    rows = {t.start_frame: i for i, t in enumerate(g.nodes)}
    assert np.array_equal(eg.node_phi.data[rows[1]], stored.node_embedding)
    want = manual_mlp(params.node_encoder, fresh.first.appearance.reshape(1, -1))
    assert np.allclose(eg.node_phi.data[rows[3]], want[0], atol=1e-12)


def test_encode_rejects_bad_dims():
    params = init_model(np.random.default_rng(6), CFG)
    bad = Tracklet([Detection(1, (0, 0, 1, 1), np.ones(7))])
    g = build_graph([bad], 2, (1, 1))
    with pytest.raises(ValueError):
        encode_graph(g, params)
    multi = Tracklet([Detection(1, (0, 0, 1, 1), np.ones(5)),
                      Detection(2, (0, 0, 1, 1), np.ones(5))])
    g2 = build_graph([multi], 2, (1, 2))
    with pytest.raises(ValueError):
        encode_graph(g2, params)
    g3 = path_graph(np.random.default_rng(7))
    with pytest.raises(ValueError):
        encode_graph(g3, params, node_init=Tensor(np.zeros((2, CFG.node_dim))))


def test_message_pass_no_edges_keeps_embeddings():
    params = init_model(np.random.default_rng(8), CFG)
    g = build_graph([single(1)], 2, (1, 1))
    eg = message_pass(encode_graph(g, params), params, steps=5)
    assert np.array_equal(eg.node_h.data, eg.node_phi.data)


def test_message_pass_zero_weights_collapse():
    rng = np.random.default_rng(9)
    g = path_graph(rng)
    params = zero_params()
    eg = message_pass(encode_graph(g, params), params, steps=1)
    assert np.all(eg.node_h.data == 0.0)
    assert np.all(eg.edge_h.data == 0.0)


def test_message_pass_rejects_zero_steps():
    params = init_model(np.random.default_rng(10), CFG)
    g = path_graph(np.random.default_rng(11))
    with pytest.raises(ValueError):
        message_pass(encode_graph(g, params), params, steps=0)


def test_message_pass_matches_straight_line_numpy_oracle():
    """Two steps on a 3-node path, replayed without the tape."""
    rng = np.random.default_rng(0)
    params = init_model(rng, CFG)
    g = path_graph(np.random.default_rng(12))
    eg = message_pass(encode_graph(g, params), params, steps=2)

    apps = np.stack([t.first.appearance for t in g.nodes])
    h = manual_mlp(params.node_encoder, apps)
    e = manual_mlp(params.edge_encoder, g.edge_features)
    incident = np.zeros(g.num_nodes, dtype=bool)
    incident[g.edge_u] = True
    incident[g.edge_v] = True
    for _ in range(2):
        hu, hv = h[g.edge_u], h[g.edge_v]
        e = manual_mlp(params.edge_update, np.concatenate([hu, hv, e], axis=1))
        past = manual_mlp(params.node_update_past, np.concatenate([hu, e], axis=1))
        fut = manual_mlp(params.node_update_future, np.concatenate([hv, e], axis=1))
        agg = np.zeros_like(h)
        np.add.at(agg, g.edge_v, past)
        np.add.at(agg, g.edge_u, fut)
        h = np.where(incident[:, None], agg, h)
    assert np.allclose(eg.node_h.data, h, atol=1e-12)
    assert np.allclose(eg.edge_h.data, e, atol=1e-12)

    probs = classify_edges(eg, params).data
    want = manual_mlp(params.edge_classifier, e)
    assert np.allclose(probs, np.clip(want, 1e-7, 1 - 1e-7), atol=1e-12)


def test_isolated_node_keeps_embedding_others_update():
    params = init_model(np.random.default_rng(13), CFG)
    rng = np.random.default_rng(14)
    # nodes at frames 1, 2 connected; frame-2 far node still reachable, so
    # isolate by window: a node alone in its own graph section via knn on
    # appearance is fragile; instead use 3 nodes where one is last-frame-only
    # and receives/sends nothing after pruning to k=1 among 2 candidates.
    a = single(1, x=0.0, rng=rng)
    b = single(2, x=1.0, rng=rng)
    g = build_graph([a, b], 1, (1, 2))
    c_only = build_graph([single(5, rng=rng)], 1, (5, 5))
    eg = message_pass(encode_graph(g, params), params, steps=3)
    iso = message_pass(encode_graph(c_only, params), params, steps=3)
    assert not np.allclose(eg.node_h.data, eg.node_phi.data)
    assert np.array_equal(iso.node_h.data, iso.node_phi.data)


def test_classify_before_message_pass_is_state_error():
    params = init_model(np.random.default_rng(15), CFG)
    g = path_graph(np.random.default_rng(16))
    eg = encode_graph(g, params)
    with pytest.raises(RuntimeError):
        classify_edges(eg, params)
    with pytest.raises(RuntimeError):
        project_edges_for_spg(eg, params)
    with pytest.raises(RuntimeError):
        project_nodes_for_isg(eg, params, use_updated=True)


def test_classifier_zero_weights_give_half():
    g = path_graph(np.random.default_rng(17))
    params = zero_params()
    eg = message_pass(encode_graph(g, params), params, steps=1)
    assert np.allclose(classify_edges(eg, params).data, 0.5)


def test_probabilities_bounded_over_random_weights():
    g = path_graph(np.random.default_rng(18))
    for seed in range(50):
        params = init_model(np.random.default_rng(seed), CFG)
        for t in params.edge_classifier.named_tensors().values():
            t.data = t.data * 50.0  # exaggerate to push the sigmoid hard
        eg = message_pass(encode_graph(g, params), params, steps=1)
        p = classify_edges(eg, params).data
        assert np.all(p > 0.0) and np.all(p < 1.0)


def test_projection_shapes_and_zero_weights():
    params = init_model(np.random.default_rng(19), CFG)
    g = path_graph(np.random.default_rng(20))
    eg = message_pass(encode_graph(g, params), params, steps=1)
    assert project_nodes_for_isg(eg, params).shape == (3, CFG.text_dim)
    assert project_edges_for_spg(eg, params).shape == (g.num_edges, CFG.text_dim)
    zp = zero_params()
    eg0 = message_pass(encode_graph(g, zp), zp, steps=1)
    assert np.all(project_nodes_for_isg(eg0, zp).data == 0.0)
    assert np.all(project_edges_for_spg(eg0, zp).data == 0.0)


def test_pre_vs_post_isg_source_differs():
    params = init_model(np.random.default_rng(21), CFG)
    g = path_graph(np.random.default_rng(22))
    eg = message_pass(encode_graph(g, params), params, steps=2)
    pre = project_nodes_for_isg(eg, params, use_updated=False).data
    post = project_nodes_for_isg(eg, params, use_updated=True).data
    assert not np.allclose(pre, post)


def _random_graph(rng, n_nodes, span=8):
    tracklets = []
    for _ in range(n_nodes):
        f = int(rng.integers(1, span + 1))
        tracklets.append(
            single(f, x=float(rng.uniform(0, 40)), app=rng.standard_normal(5))
        )
    return build_graph(tracklets, knn_k=3, window=(1, span))


def test_permutation_equivariance():
    params = init_model(np.random.default_rng(23), CFG)
    rng = np.random.default_rng(24)
    for trial in range(20):
        g = _random_graph(rng, int(rng.integers(2, 21)))
        if g.num_edges == 0:
            continue
        eg = message_pass(encode_graph(g, params), params, CFG.message_passing_steps)
        probs = classify_edges(eg, params).data

        perm = rng.permutation(g.num_nodes)
        inv = np.argsort(perm)
        pg = TrackGraph(
            [g.nodes[i] for i in perm],
            inv[g.edge_u],
            inv[g.edge_v],
            g.edge_features,
            g.frame_span,
        )
        peg = message_pass(encode_graph(pg, params), params, CFG.message_passing_steps)
        pprobs = classify_edges(peg, params).data
        assert np.allclose(peg.node_h.data, eg.node_h.data[perm], atol=1e-9)
        assert np.allclose(pprobs, probs, atol=1e-9)


def test_edge_order_permutation_permutes_probabilities():
    params = init_model(np.random.default_rng(25), CFG)
    rng = np.random.default_rng(26)
    g = _random_graph(rng, 12)
    assert g.num_edges > 2
    probs = classify_edges(
        message_pass(encode_graph(g, params), params, 2), params
    ).data
    eperm = rng.permutation(g.num_edges)
    g2 = TrackGraph(
        g.nodes, g.edge_u[eperm], g.edge_v[eperm], g.edge_features[eperm], g.frame_span
    )
    probs2 = classify_edges(
        message_pass(encode_graph(g2, params), params, 2), params
    ).data
    assert np.allclose(probs2, probs[eperm], atol=1e-9)


def test_symmetric_branches_get_identical_embeddings():
    # Two future nodes with identical features attached to a shared root:
    # the graph has an automorphism swapping them, embeddings must match.
    params = init_model(np.random.default_rng(27), CFG)
    app_root = np.ones(5)
    app_twin = np.full(5, 0.5)
    root = single(1, x=0.0, app=app_root)
    t1 = single(2, x=4.0, app=app_twin)
    t2 = single(2, x=-4.0, app=app_twin)
    feats = np.stack([
        np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.2]),
        np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.2]),
    ])
    g = TrackGraph([root, t1, t2], np.array([0, 0]), np.array([1, 2]), feats, (1, 2))
    for steps in (1, 2, 5):
        eg = message_pass(encode_graph(g, params), params, steps)
        assert np.allclose(eg.node_h.data[1], eg.node_h.data[2], atol=1e-12)


def test_forward_deterministic_bitwise():
    rng_g = np.random.default_rng(28)
    g = _random_graph(rng_g, 10)
    outs = []
    for _ in range(2):
        params = init_model(np.random.default_rng(29), CFG)
        eg = message_pass(encode_graph(g, params), params, 3)
        outs.append(classify_edges(eg, params).data)
    assert np.array_equal(outs[0], outs[1])


def test_params_round_trip_through_tensor_dict():
    params = init_model(np.random.default_rng(30), CFG)
    rebuilt = params_from_tensors(params.named_tensors(), CFG)
    g = _random_graph(np.random.default_rng(31), 8)
    a = classify_edges(message_pass(encode_graph(g, params), params, 2), params).data
    b = classify_edges(message_pass(encode_graph(g, rebuilt), rebuilt, 2), rebuilt).data
    assert np.array_equal(a, b)


def test_named_tensor_count_matches_architecture():
    params = init_model(np.random.default_rng(32), CFG)
    names = params.named_tensors()
    # 6 two-layer blocks and 2 single-layer heads, each layer has w and b
    assert len(names) == (6 * 2 + 2) * 2
    assert all(n.endswith((".w", ".b")) for n in names)
