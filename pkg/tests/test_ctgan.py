import math

import numpy as np
import pytest

from ctgsm.ctgan import (
    Ctgan,
    CtganConfig,
    RowCodec,
    TrainingDivergence,
    _apply_head,
    _head_backward,
    cond_probabilities,
    cond_vector,
    fit_codec,
    generate,
    generate_encoded,
    init_ctgan,
    sample_cond,
    train_ctgan,
    discriminator_accuracy,
)
from ctgsm.data import DataError, Dataset

from .oracles import max_rel_error, numeric_grad

SMALL = dict(noise_dim=8, generator_hidden=(16, 16), discriminator_hidden=(16, 16), batch_size=16)


def toy(n0=120, n1=40, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal([0.2, 0.3], 0.05, (n0, 2)), rng.normal([0.8, 0.6], 0.05, (n1, 2))])
    y = np.r_[np.zeros(n0, dtype=int), np.ones(n1, dtype=int)]
    return Dataset(X, y, ("Benign", "Bot"))


def test_codec_width_and_label_roundtrip():
    data = toy()
    codec = fit_codec(data, K=10, seed=1)
    assert codec.width == 2 * 11 + 2
    enc = codec.encode(data.features, data.labels, rng=np.random.default_rng(0))
    feats, labels = codec.decode(enc)
    assert np.array_equal(labels, data.labels)
    for j, g in enumerate(codec.gmms):
        s, _ = codec.feature_span(j)
        k = enc[:, s + 1:s + 1 + codec.K].argmax(axis=1)
        inside = np.abs(data.features[:, j] - g.means[k]) <= 4 * g.stds[k]
        assert inside.any()
        assert np.abs(feats[inside, j] - data.features[inside, j]).max() < 1e-6
    back = RowCodec.from_dict(codec.to_dict())
    assert np.array_equal(back.encode(data.features, data.labels, argmax=True),
                          codec.encode(data.features, data.labels, argmax=True))


def test_log_frequency_probability():
    labels = np.r_[np.zeros(1000, dtype=int), np.ones(10, dtype=int)]
    p = cond_probabilities(labels, 2)
    expected = math.log(11) / (math.log(1001) + math.log(11))
    assert p[1] == pytest.approx(expected, abs=1e-12)
    assert p[1] == pytest.approx(0.258, abs=5e-4)


def test_cond_sampling_cases():
    rng = np.random.default_rng(0)
    cls, rows = sample_cond(np.full(7, 2), rng, 50, n_classes=3)
    assert set(cls) == {2} and set(rows) <= set(range(7))
    labels = np.r_[np.zeros(500, dtype=int), np.full(30, 3), np.full(20, 4)]
    cls, rows = sample_cond(labels, rng, 100_000, "uniform", classes=[3, 4], n_classes=5)
    frac = (cls == 3).mean()
    assert abs(frac - 0.5) < 4 * math.sqrt(0.25 / 100_000)
    assert np.array_equal(labels[rows], cls)
    with pytest.raises(DataError):
        cond_probabilities(labels, 5, "uniform", classes=[1])
    assert cond_vector(np.array([1, 0]), 3).tolist() == [[0, 1, 0], [1, 0, 0]]


def test_untrained_generator_output_is_well_formed():
    data = toy()
    codec = fit_codec(data, K=4)
    model = init_ctgan(codec, CtganConfig(epochs=0, **SMALL))
    enc = generate_encoded(model, 1, 300, np.random.default_rng(0))
    assert enc.shape == (300, codec.width)
    assert np.all(np.abs(enc[:, codec.alpha_slots()]) <= 1.0)
    for a, b in codec.softmax_groups():
        np.testing.assert_allclose(enc[:, a:b].sum(axis=1), 1.0, atol=1e-9)
    assert len(generate(model, 0, 0, np.random.default_rng(0))) == 0
    with pytest.raises(DataError):
        generate(model, 5, 3, np.random.default_rng(0))


def test_head_backward_matches_finite_differences():
    data = toy()
    codec = fit_codec(data, K=3)
    rng = np.random.default_rng(2)
    raw = rng.normal(size=(4, codec.width))
    W = rng.normal(size=raw.shape)
    out = _apply_head(codec, raw)
    analytic = _head_backward(codec, out, W)
    numeric = numeric_grad(lambda: float((_apply_head(codec, raw) * W).sum()), [raw])
    assert max_rel_error([analytic], numeric) < 1e-6


def test_discriminator_separates_frozen_generator():
    rng = np.random.default_rng(3)
    X = rng.uniform(0.7, 1.0, size=(256, 2))  # real rows live in a corner box
    data = Dataset(X, np.zeros(256, dtype=int), ("Benign",))
    codec = fit_codec(data, K=2)
    cfg = CtganConfig(epochs=50, train_generator=False, seed=4, **SMALL)
    model = train_ctgan(data, codec, cfg)
    assert discriminator_accuracy(model, data, np.random.default_rng(5), 1000) > 0.9
    assert all(math.isnan(v) for v in model.history["g_loss"])


def test_conditioning_and_label_group():
    data = toy()
    codec = fit_codec(data, K=4, seed=2)
    model = train_ctgan(data, codec, CtganConfig(epochs=200, seed=5, **SMALL))
    assert len(model.history["d_loss"]) == 200
    rng = np.random.default_rng(6)
    for c in (0, 1):
        enc = generate_encoded(model, c, 5000, rng)
        assert (enc[:, codec.label_start:].argmax(axis=1) == c).mean() > 0.99
        rows = generate(model, c, 100, rng, clip=(0.0, 1.0))
        assert np.all(rows.labels == c)
        assert rows.features.min() >= 0.0 and rows.features.max() <= 1.0


def test_training_is_reproducible_and_serializable(tmp_path):
    data = toy(60, 20)
    codec = fit_codec(data, K=3)
    cfg = CtganConfig(epochs=2, seed=7, **SMALL)
    a, b = train_ctgan(data, codec, cfg), train_ctgan(data, codec, cfg)
    assert a.history == b.history
    a.save(tmp_path / "g.json")
    back = Ctgan.load(tmp_path / "g.json")
    x = generate(a, 1, 5, np.random.default_rng(0)).features
    y = generate(back, 1, 5, np.random.default_rng(0)).features
    assert np.array_equal(x, y)


def test_divergence_guard():
    data = toy(60, 20)
    codec = fit_codec(data, K=3)
    cfg = CtganConfig(epochs=1, seed=8, **SMALL)
    model = init_ctgan(codec, cfg)
    model.discriminator.layers[0].W[:] = np.nan
    with pytest.raises(TrainingDivergence):
        train_ctgan(data, codec, cfg, model=model)


def test_config_validation():
    with pytest.raises(ValueError):
        CtganConfig(batch_size=1)
    d = CtganConfig()
    assert (d.noise_dim, d.generator_hidden, d.discriminator_hidden, d.discriminator_dropout, d.epochs, d.batch_size) == (
        128, (256, 256), (256, 256), 0.5, 700, 64)
