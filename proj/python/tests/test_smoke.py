import json
import math

import numpy as np
import pytest

import lgseg


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_normalize_three_four_five():
    out = lgseg.normalize_embeddings(np.array([[[3.0, 4.0]]]))
    assert out.shape == (1, 1, 2)
    assert np.allclose(out[0, 0], [0.6, 0.8])


def test_pool_two_orthogonal_pixels():
    emb = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    ids, segs, counts = lgseg.pool_segments(emb, np.zeros((1, 2), dtype=np.int32))
    assert counts == [2]
    assert np.allclose(segs[0], [1 / math.sqrt(2)] * 2)


def test_loss_values():
    rng = np.random.default_rng(0)
    v = unit_rows(rng, 4, 3)
    assert lgseg.embedding_consistency_loss(v, v) == pytest.approx(0.0, abs=1e-12)
    assert lgseg.embedding_consistency_loss(v, -v) == pytest.approx(2.0)
    seg = np.array([[0.0, 0.0, 1.0]])
    protos = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert lgseg.semantic_consistency_loss(seg, protos, np.array([1])) == pytest.approx(math.log(2))


def test_pseudo_labels_match_numpy_argmax():
    rng = np.random.default_rng(1)
    protos = unit_rows(rng, 8, 5)
    feats = rng.normal(size=(200, 5))
    expect = np.argmax(feats @ protos.T, axis=1)
    assert lgseg.pseudo_labels(feats, protos) == list(expect)


def test_langseg_and_metrics():
    rng = np.random.default_rng(2)
    text = unit_rows(rng, 3, 6)
    emb = unit_rows(rng, 64, 6).reshape(8, 8, 6)
    pred = lgseg.langseg_predict(emb, text)
    assert pred.shape == (8, 8)
    assert np.array_equal(pred, np.argmax(emb @ text.T, axis=2))
    assert lgseg.compute_miou(pred, pred) == 1.0
    assert lgseg.compute_pacc(pred, pred) == 1.0
    assert lgseg.compute_hiou(29.4, 32.0) == pytest.approx(30.6, abs=0.05)


def test_errors_are_typed():
    with pytest.raises(lgseg.ConfigError):
        lgseg.cluster_to_segments(np.ones((2, 2, 3)), k=5)
    with pytest.raises(lgseg.AlignmentError):
        lgseg.embedding_consistency_loss(np.ones((2, 2)), np.ones((3, 2)))
    with pytest.raises(lgseg.Error):
        lgseg.build_known_prototypes(np.eye(2), np.eye(2), top_m=5)


def test_unknown_prototype_descent():
    rng = np.random.default_rng(3)
    feats = unit_rows(rng, 5, 4) + 2.0 * np.array([1.0, 0, 0, 0])
    target = feats.sum(axis=0)
    target /= np.linalg.norm(target)
    c = unit_rows(rng, 1, 4)
    for _ in range(500):
        _, g = lgseg.unknown_update_loss(c, feats, np.ones(5, dtype=np.int32), 1)
        c = c - g
        c /= np.linalg.norm(c)
    assert float(c[0] @ target) >= 0.999


def test_pipeline_round_trip(tmp_path):
    corpus = tmp_path / "corpus"
    lgseg.gen_synth(str(corpus), seed=3, train_images=8, eval_images=3)
    cfg = corpus / "config.json"
    data = json.loads(cfg.read_text())
    data["train"]["iterations"] = 20
    cfg.write_text(json.dumps(data))
    names, known, unknown = lgseg.build_prototypes(str(cfg))
    assert names == ["disc", "block", "wedge"]
    assert known.shape[0] == 3 and unknown.shape[0] == 64
    totals = lgseg.train(str(cfg))
    assert len(totals) == 20 and all(math.isfinite(t) for t in totals)
    rep = lgseg.evaluate(str(cfg), "langseg")
    assert 0.0 <= rep["mIoU"] <= 1.0
    assert rep["unknown_names"] == ["ring"]
    assert len(lgseg.config_hash(str(cfg))) == 16
