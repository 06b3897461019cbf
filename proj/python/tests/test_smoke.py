import math

import numpy as np
import pytest

import docnn_hsi as dh


def test_parameter_counts():
    assert dh.analytic_parameter_count(dh.variant_config("docnn-drc")) == 26889
    assert dh.analytic_parameter_count(dh.variant_config("scnn")) == 21705
    assert dh.analytic_parameter_count(dh.variant_config("sdcnn")) == 3849
    model = dh.Model.build(dh.variant_config("docnn-drc"), seed=1)
    assert model.parameter_count() == 26889
    assert sum(p.size for p in model.parameters().values()) == 26889


def test_fold_matches_numpy_einsum():
    rng = np.random.default_rng(0)
    d = rng.uniform(-1, 1, (9, 4, 3))
    w = rng.uniform(-1, 1, (5, 4, 3))
    b = rng.uniform(-1, 1, 5)
    q = dh.doconv_fold(d, w, b)
    expected = np.einsum("idc,odc->oic", d, w).reshape(5, 3, 3, 3)
    np.testing.assert_allclose(q, expected, rtol=0, atol=1e-12)

    x = rng.uniform(-1, 1, (6, 7, 3))
    composed = dh.doconv_compose(x, d, w, b)
    folded = dh.conv_std(x, q, b)
    assert np.max(np.abs(composed - folded)) <= 1e-10 * np.max(np.abs(folded))


def test_forward_paths_and_save_roundtrip(tmp_path):
    model = dh.Model.build(dh.variant_config("docnn-drc", num_classes=4), seed=3)
    patch = np.random.default_rng(1).normal(size=(9, 9, 15))
    logits = model.forward(patch)
    assert logits.shape == (4,)
    np.testing.assert_allclose(model.forward(patch, composed=True), logits, rtol=1e-10, atol=1e-12)

    path = tmp_path / "m.docnn"
    model.export_folded(path)
    folded = dh.Model.load(path)
    assert folded.config.layer_type == "standard"
    np.testing.assert_allclose(folded.forward(patch), logits, rtol=1e-5, atol=1e-6)
    assert folded.predict(patch) == model.predict(patch)


def test_load_error(tmp_path):
    bad = tmp_path / "bad.docnn"
    bad.write_bytes(b"NOTAMODEL")
    with pytest.raises(dh.LoadError):
        dh.Model.load(bad)


def test_metrics_hand_case():
    cm = np.array([[40, 10], [5, 45]])
    assert dh.overall_accuracy(cm) == pytest.approx(0.85)
    assert dh.kappa(cm) == pytest.approx(0.70)
    m = dh.confusion([0, 1, 1, 2], [0, 1, 2, 2], 3)
    assert m.tolist() == [[1, 0, 0], [0, 1, 1], [0, 0, 1]]


def test_pca_diagonal_case():
    a, b, c = math.sqrt(12), math.sqrt(3), math.sqrt(0.75)
    px = np.array([[a, 0, 0], [-a, 0, 0], [0, b, 0], [0, -b, 0], [0, 0, c], [0, 0, -c]])
    fit = dh.pca_fit(px.reshape(2, 3, 3), 3)
    np.testing.assert_allclose(fit["explained_variance"], [4, 1, 0.25], atol=1e-12)
    np.testing.assert_allclose(fit["components"], np.eye(3), atol=1e-12)


def test_synthetic_scene_and_training():
    cube, labels, names = dh.synthetic_scene()
    assert cube.shape == (32, 32, 20)
    assert labels.shape == (32, 32)
    assert names == ["alpha", "beta", "gamma"]

    cfg = dh.variant_config("docnn-drc", num_classes=3, in_channels=20)
    cfg.input_size = 3
    model = dh.Model.build(cfg, seed=0)
    rows = [(r, c) for r in range(1, 31, 3) for c in range(1, 31, 3)]
    patches = np.stack([cube[r - 1:r + 2, c - 1:c + 2, :] for r, c in rows])
    y = [int(labels[r, c]) - 1 for r, c in rows]
    losses = model.train(patches, y, epochs=10, batch_size=16)
    assert len(losses) == 10
    assert losses[-1] < losses[0]


def test_selfcheck_passes():
    results = dh.selfcheck()
    assert results
    assert all(ok for _, ok, _ in results), results
