import numpy as np
import pytest

import kinverify as kv


def test_sigmoid_and_soft_threshold():
    assert kv.sigmoid(0.0) == 0.5
    assert abs(kv.sigmoid(2.0) + kv.sigmoid(-2.0) - 1.0) < 1e-12

    out = kv.soft_threshold(np.array([3.0, -0.5, 0.0]), 1.0)
    assert np.array_equal(out, [2.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        kv.soft_threshold(np.array([1.0]), -1.0)


def test_prox_matches_numpy_svd():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.normal(size=(rng.integers(1, 9), rng.integers(1, 9)))
        tau = float(rng.uniform(0.2, 1.2))
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        expected = (u * np.maximum(s - tau, 0.0)) @ vt
        got = kv.prox_trace_norm(m, tau)
        assert np.max(np.abs(got - expected)) < 1e-10


def test_priors():
    p = kv.compute_priors(1.0, 1.0)
    assert p.p_fc == 0.5 and p.p_mc == 0.5
    p = kv.compute_priors(np.log(3.0), 0.0)
    assert abs(p.p_fc - 0.75) < 1e-14
    q = kv.stabilize_priors(p, 1.0)
    assert q.p_fc == 0.5 and q.p_mc == 0.5


def test_face_feature_shapes():
    rng = np.random.default_rng(5)
    image = rng.integers(0, 240, size=(64, 64), dtype=np.uint8)
    full = kv.face_feature(image)
    assert full.shape == (49 * 128,)
    sel = kv.face_feature(image, [0, 7, 12])
    assert sel.shape == (3 * 128,)

    flat = np.full((64, 64), 80, dtype=np.uint8)
    assert np.all(kv.face_feature(flat) == 0.0)

    grid = kv.extract_patch_grid(image)
    assert grid.shape == (128, 49)
    norms = np.linalg.norm(grid, axis=0)
    assert np.all((np.abs(norms - 1.0) < 1e-9) | (norms == 0.0))


def test_synth_and_models_end_to_end():
    cfg = kv.SynthConfig()
    cfg.mode = "sbm"
    cfg.dim = 10
    cfg.n_pos = 120
    cfg.rank = 2
    cfg.seed = 9

    data = kv.synth_generate(cfg)
    again = kv.synth_generate(cfg)
    assert np.array_equal(data.positives[0].father, again.positives[0].father)
    assert len(data.positives) == 120 and len(data.negatives) == 120

    train = data.all()
    solver = kv.SolverConfig()
    solver.max_iterations = 150
    model = kv.fit_sbm(train, 0.1, solver)
    probs = [model.predict(t.father, t.mother, t.child) for t in train]
    assert all(0.0 < p < 1.0 for p in probs)
    decisions = [1 if p >= 0.5 else -1 for p in probs]
    labels = [t.label for t in train]
    assert kv.accuracy(decisions, labels) > 0.85

    points, auc = kv.roc_auc(probs, labels)
    assert 0.9 <= auc <= 1.0
    assert points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)


def test_rsbm_and_pair_prediction():
    cfg = kv.SynthConfig()
    cfg.mode = "resemblance"
    cfg.dim = 8
    cfg.n_pos = 60
    cfg.noise_sigma = 0.5
    cfg.seed = 4

    train = kv.synth_generate(cfg).all()
    solver = kv.SolverConfig()
    solver.max_iterations = 100
    model = kv.fit_rsbm(train, 0.1, 0.1, 2, solver)
    p = model.predict(train[0].father, train[0].mother, train[0].child)
    assert 0.0 < p < 1.0

    sbm = kv.fit_sbm(train, 0.1, solver)
    pp = kv.predict_pair(sbm, train[0].father, train[0].child, "father")
    assert 0.0 < pp < 1.0


def test_selection_votes():
    cfg = kv.SynthConfig()
    cfg.mode = "patches"
    cfg.dim = 4
    cfg.n_pos = 40
    cfg.planted_patches = 3
    cfg.seed = 2

    data = kv.synth_generate(cfg)
    solver = kv.SolverConfig()
    solver.max_iterations = 120
    sel = kv.fit_selection(data.all(), 0.5, 3, solver)
    assert sel.k == 3
    assert len(sel.father_patches) == 3
    assert sorted(sel.father_patches) == list(sel.father_patches)
    assert kv.select_top_k(np.zeros(49), 2) == [0, 1]
