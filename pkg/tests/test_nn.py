import math

import numpy as np
import pytest

from ctgsm import nn

from .oracles import max_rel_error, numeric_grad


def test_identity_layer_passes_input_through():
    net = nn.Mlp([nn.Dense(np.eye(3), np.zeros(3), "identity")])
    x = np.random.default_rng(0).normal(size=(4, 3))
    out, _ = nn.forward(net, x)
    assert np.array_equal(out, x)


def test_softmax_rows_sum_to_one():
    net = nn.build_mlp([5, 7, 4], output_activation="softmax", seed=1)
    out, _ = nn.forward(net, np.random.default_rng(1).normal(size=(50, 5)) * 30)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)


def test_zero_dropout_train_equals_inference():
    net = nn.build_mlp([4, 6, 2], dropout=0.0, seed=2)
    x = np.ones((3, 4))
    a, _ = nn.forward(net, x, training=True, rng=np.random.default_rng(0))
    b, _ = nn.forward(net, x)
    assert np.array_equal(a, b)


def test_dropout_expectation():
    net = nn.build_mlp([3, 8, 1], hidden_activation="relu", dropout=0.4, seed=3)
    x = np.array([[0.5, -1.0, 2.0]])
    ref, _ = nn.forward(net, x)
    rng = np.random.default_rng(4)
    draws = np.array([nn.forward(net, x, True, rng)[0][0, 0] for _ in range(20000)])
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - ref[0, 0]) < 3 * se


def test_structural_checks():
    with pytest.raises(ValueError):
        nn.Mlp([nn.Dense(np.zeros((2, 3)), np.zeros(3)), nn.Dense(np.zeros((2, 1)), np.zeros(1))])
    with pytest.raises(ValueError):
        nn.Mlp([nn.Dense(np.zeros((2, 3)), np.zeros(3), "softmax"), nn.Dense(np.zeros((3, 1)), np.zeros(1))])
    net = nn.build_mlp([2, 3, 1])
    with pytest.raises(ValueError):
        nn.forward(net, np.zeros((1, 5)))


def test_stale_cache_rejected():
    net = nn.build_mlp([2, 3, 1])
    _, cache = nn.forward(net, np.ones((2, 2)))
    grads, _ = nn.backward(net, cache, np.ones((2, 1)))
    nn.adam_step(net, grads, nn.AdamState.for_params(net))
    with pytest.raises(nn.StaleCacheError):
        nn.backward(net, cache, np.ones((2, 1)))
    with pytest.raises(nn.StaleCacheError):
        nn.backward(net.copy(), cache, np.ones((2, 1)))


def test_zero_output_gradient_gives_zero_grads():
    net = nn.build_mlp([3, 4, 2], hidden_activation="tanh", seed=5)
    _, cache = nn.forward(net, np.ones((2, 3)))
    grads, gin = nn.backward(net, cache, np.zeros((2, 2)))
    assert all(not g.any() for g in grads) and not gin.any()


def test_linear_layer_gradient_is_xt_delta():
    rng = np.random.default_rng(6)
    X, T = rng.normal(size=(8, 3)), rng.normal(size=(8, 2))
    net = nn.Mlp([nn.Dense(rng.normal(size=(3, 2)), rng.normal(size=2))])
    out, cache = nn.forward(net, X)
    delta = (out - T) / len(X)
    grads, _ = nn.backward(net, cache, delta)
    np.testing.assert_allclose(grads[0], X.T @ delta, rtol=1e-12)

    def loss():
        o, _ = nn.forward(net, X)
        return 0.5 * ((o - T) ** 2).sum() / len(X)

    num = numeric_grad(loss, net.params())
    assert max_rel_error(grads, num) < 1e-6


def _loss_closure(net, X, y, kind, cfg=None):
    def f():
        probs, _ = nn.forward(net, X)
        if kind == "focal":
            return nn.focal_loss(probs, y, cfg)[0]
        return nn.cross_entropy_loss(probs, y)[0]
    return f


@pytest.mark.parametrize("kind", ["focal", "ce"])
def test_gradient_check_small_classifier(kind):
    rng = np.random.default_rng(7)
    net = nn.build_mlp([10, 12, 8, 6], "relu", "softmax", seed=8)
    X = rng.normal(size=(9, 10))
    y = rng.integers(0, 6, 9)
    cfg = nn.FocalLossConfig(1.0, 2.0)
    probs, cache = nn.forward(net, X)
    _, g = nn.focal_loss(probs, y, cfg) if kind == "focal" else nn.cross_entropy_loss(probs, y)
    grads, _ = nn.backward(net, cache, g, wrt_logits=True)
    num = numeric_grad(_loss_closure(net, X, y, kind, cfg), net.params())
    assert max_rel_error(grads, num) < 1e-4


def test_gradient_check_other_activations():
    rng = np.random.default_rng(9)
    for act, out in (("tanh", "sigmoid"), ("leaky_relu", "identity"), ("sigmoid", "tanh")):
        net = nn.build_mlp([4, 5, 3], act, out, seed=10)
        X, W = rng.normal(size=(6, 4)), rng.normal(size=(6, 3))
        o, cache = nn.forward(net, X)
        grads, gin = nn.backward(net, cache, W)

        def f():
            return float((nn.forward(net, X)[0] * W).sum())

        assert max_rel_error(grads, numeric_grad(f, net.params())) < 1e-4
        assert max_rel_error([gin], numeric_grad(f, [X])) < 1e-4


def test_dropout_backward_reuses_mask():
    net = nn.build_mlp([3, 5, 2], dropout=0.5, seed=11)
    X = np.random.default_rng(0).normal(size=(4, 3))
    W = np.random.default_rng(1).normal(size=(4, 2))
    _, cache = nn.forward(net, X, True, np.random.default_rng(12))
    grads, _ = nn.backward(net, cache, W)

    def f():
        return float((nn.forward(net, X, True, np.random.default_rng(12))[0] * W).sum())

    assert max_rel_error(grads, numeric_grad(f, net.params())) < 1e-4


def test_focal_known_value():
    probs = np.array([[0.5, 0.5]])
    loss, _ = nn.focal_loss(probs, [0], nn.FocalLossConfig(0.25, 2.0))
    assert loss == pytest.approx(-0.25 * 0.25 * math.log(0.5), abs=1e-15)
    assert loss == pytest.approx(0.043322, abs=1e-6)


def test_focal_perfect_prediction():
    loss, g = nn.focal_loss(np.eye(3), [0, 1, 2])
    assert loss == 0.0 and not g.any()


def test_focal_gamma0_equals_cross_entropy():
    rng = np.random.default_rng(13)
    for _ in range(100):
        probs = nn.softmax(rng.normal(size=(16, 5)) * 3)
        y = rng.integers(0, 5, 16)
        fl, fg = nn.focal_loss(probs, y, nn.FocalLossConfig(1.0, 0.0))
        ce, cg = nn.cross_entropy_loss(probs, y)
        assert abs(fl - ce) <= 1e-12
        np.testing.assert_allclose(fg, cg, atol=1e-12)


def test_cross_entropy_closed_forms():
    C = 7
    loss, _ = nn.cross_entropy_loss(np.full((3, C), 1.0 / C), [0, 3, 6])
    assert loss == pytest.approx(math.log(C), abs=1e-12)
    assert nn.cross_entropy_loss(np.eye(2), [0, 1])[0] <= 1e-10
    with pytest.raises(ValueError):
        nn.cross_entropy_loss(np.eye(2), [0, 2])


def test_focal_logit_gradient_bounded():
    rng = np.random.default_rng(14)
    for alpha, gamma in ((1.0, 2.0), (0.25, 2.0), (2.0, 0.5), (1.0, 5.0)):
        probs = nn.softmax(rng.normal(size=(200, 4)) * 6)
        y = rng.integers(0, 4, 200)
        _, g = nn.focal_loss(probs, y, nn.FocalLossConfig(alpha, gamma))
        per_sample = g * len(y)
        assert np.abs(per_sample).max() <= alpha * (1 + gamma) + 1e-12


def test_adam_behaviour():
    p = [np.array([1.0, -2.0])]
    st = nn.AdamState.for_params(p)
    nn.adam_step(p, [np.zeros(2)], st)
    assert p[0].tolist() == [1.0, -2.0] and st.t == 1
    g = np.array([0.3, -5.0])
    before = p[0].copy()
    for _ in range(500):
        prev = p[0].copy()
        nn.adam_step(p, [g], st)
    np.testing.assert_allclose(p[0] - prev, -1e-3 * np.sign(g), rtol=1e-3)
    assert st.t == 501
    assert np.all(np.sign(p[0] - before) == -np.sign(g))
    with pytest.raises(ValueError):
        nn.adam_step(p, [np.zeros(3)], st)


def test_adam_defaults():
    d = nn.AdamState.for_params([np.zeros(1)])
    assert (d.lr, d.beta1, d.beta2, d.eps) == (1e-3, 0.9, 0.999, 1e-8)
    gan = nn.AdamState.for_gan([np.zeros(1)])
    assert (gan.lr, gan.beta1, gan.beta2) == (2e-4, 0.5, 0.9)


def test_init_scales():
    net = nn.build_mlp([400, 300, 200], "relu", "tanh", seed=15)
    assert net.layers[0].W.std() == pytest.approx(math.sqrt(2 / 400), rel=0.02)
    assert net.layers[1].W.std() == pytest.approx(math.sqrt(2 / 500), rel=0.02)


def test_snapshot_roundtrip_and_reproducible():
    a = nn.build_mlp([3, 4, 2], dropout=0.4, seed=16)
    b = nn.Mlp.from_dict(a.to_dict())
    x = np.ones((2, 3))
    assert np.array_equal(nn.forward(a, x)[0], nn.forward(b, x)[0])
    c = nn.build_mlp([3, 4, 2], dropout=0.4, seed=16)
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), c.params()))
