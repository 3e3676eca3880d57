import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereproj import neural as nn
from sphereproj.selftest import kink_free, layer_cases


def naive_conv(x, W, b, padding, stride=1):
    """Six nested loops over (n, o, i, j, c, a, b); circular axes index modulo the size."""
    n_, c_in, h, w = x.shape
    c_out, _, kh, kw = W.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((n_, c_out, -(-h // stride), -(-w // stride)))
    for n in range(n_):
        for o in range(c_out):
            for i in range(0, h, stride):
                for j in range(0, w, stride):
                    s = b[o]
                    for c in range(c_in):
                        for a in range(kh):
                            for e in range(kw):
                                r, q = i + a - ph, j + e - pw
                                if padding[0] == "circular":
                                    r %= h
                                if padding[1] == "circular":
                                    q %= w
                                if 0 <= r < h and 0 <= q < w:
                                    s += W[o, c, a, e] * x[n, c, r, q]
                    out[n, o, i // stride, j // stride] = s
    return out


def numeric_grads(layer, x, u, step=1e-5):
    """Central differences of sum(u * layer(x)) for the input and each parameter."""
    def f():
        return float((layer.forward(x) * u).sum())

    out = {}
    for name, arr in ({"x": x} | layer.params).items():
        num = np.zeros_like(arr)
        flat, nflat = arr.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            hi = f()
            flat[i] = old - step
            lo = f()
            flat[i] = old
            nflat[i] = (hi - lo) / (2 * step)
        out[name] = num
    return out


def rel_err(a, b):
    scale = max(np.abs(a).max(initial=0), np.abs(b).max(initial=0), 1e-300)
    return np.abs(a - b).max(initial=0) / scale


class XentAsLayer(nn.Layer):
    kind = "softmax_xent"

    def __init__(self, labels):
        super().__init__()
        self.labels = labels
        self.loss = nn.SoftmaxCrossEntropy()

    def forward(self, x):
        return np.array([self.loss.forward(x, self.labels)])

    def backward(self, g):
        return self.loss.backward() * g[0]


# --- conv ----------------------------------------------------------------------

def test_conv_identity(rng):
    conv = nn.Conv2d(1, 1, 1)
    conv.params["W"][...] = 1.0
    x = rng.standard_normal((2, 1, 4, 5))
    assert np.array_equal(conv.forward(x), x)


def test_conv_circular_left_neighbour():
    conv = nn.Conv2d(1, 1, (1, 3), ("zero", "circular"))
    conv.params["W"][...] = np.array([1.0, 0, 0]).reshape(1, 1, 1, 3)
    x = np.array([1.0, 2, 3, 4]).reshape(1, 1, 1, 4)  # (a, b, c, d)
    assert conv.forward(x).ravel().tolist() == [4, 1, 2, 3]  # (d, a, b, c)


@pytest.mark.parametrize("padding", [("zero", "zero"), ("zero", "circular"), ("circular", "circular")])
def test_conv_matches_naive(rng, padding):
    conv = nn.Conv2d(2, 3, 3, padding, rng=rng)
    conv.params["b"][...] = rng.standard_normal(3)
    x = rng.standard_normal((1, 2, 5, 7))
    assert np.abs(conv.forward(x) - naive_conv(x, conv.params["W"], conv.params["b"], padding)).max() <= 1e-12


def test_conv_stride_matches_naive(rng):
    conv = nn.Conv2d(2, 2, 3, ("zero", "circular"), 2, rng)
    x = rng.standard_normal((2, 2, 6, 8))
    assert np.abs(conv.forward(x) - naive_conv(x, conv.params["W"], conv.params["b"], conv.padding, 2)).max() <= 1e-12


def test_conv_rejects_even_kernel_and_bad_shape():
    with pytest.raises(ValueError):
        nn.Conv2d(1, 1, 2)
    with pytest.raises(ValueError):
        nn.Conv2d(2, 1, 3).forward(np.zeros((1, 3, 4, 4)))


@given(st.integers(0, 2**32), st.integers(-20, 20), st.sampled_from([1, 3, 5]))
@settings(max_examples=30)
def test_circular_conv_shift_equivariance(seed, s, k):
    rng = np.random.default_rng(seed)
    conv = nn.Conv2d(2, 3, k, ("zero", "circular"), rng=rng)
    x = rng.standard_normal((2, 2, 5, 9))
    a = np.roll(conv.forward(x), s, axis=3)
    b = conv.forward(np.roll(x, s, axis=3))
    assert np.abs(a - b).max() <= 1e-12


# --- cyclic fc -----------------------------------------------------------------

def test_cyclic_identity_init():
    l, d = 12, 4
    W = np.zeros((l, d, d))
    W[0] = np.eye(d)
    f = np.random.default_rng(0).standard_normal((l, d))
    assert np.array_equal(nn.cyclic_fc(f, W, np.zeros((l, d)), "identity"), f)


def test_cyclic_hand_example():
    W = np.array([[[1.0]], [[2.0]]])
    b = np.array([[0.5], [-0.5]])
    out = nn.cyclic_fc(np.array([[1.0], [3.0]]), W, b, "identity")
    assert out.ravel().tolist() == [7.0, 5.0]


@given(st.integers(0, 2**32), st.integers(1, 11), st.sampled_from(["relu", "identity"]))
@settings(max_examples=30)
def test_cyclic_shift_equivariance(seed, s, act):
    rng = np.random.default_rng(seed)
    layer = nn.CyclicFC(12, 5, 4, act, rng, cross_init="glorot")
    layer.params["b"][...] = rng.standard_normal((12, 4))
    x = rng.standard_normal((3, 12, 5))
    a = np.roll(layer.forward(x), s, axis=1)
    b = layer.forward(np.roll(x, s, axis=1))
    assert np.abs(a - b).max() <= 1e-12
    ref = nn.cyclic_fc(np.roll(x, s, axis=1), layer.params["W"], layer.params["b"], act)
    assert np.abs(ref - b).max() <= 1e-12


def test_zero_cross_links_equal_per_position_dense(rng):
    layer = nn.CyclicFC(12, 6, 5, "identity", rng)
    assert not layer.params["W"][1:].any()
    dense = nn.Dense(6, 5)
    dense.params["W"][...] = layer.params["W"][0]
    x = rng.standard_normal((4, 12, 6))
    assert np.abs(layer.forward(x) - dense.forward(x)).max() <= 1e-12


def test_mean_after_equivariant_stack_is_invariant(rng):
    stack = nn.Sequential(nn.CyclicFC(12, 6, 6, "relu", rng, "glorot"), nn.CyclicFC(12, 6, 3, "identity", rng, "glorot"),
                          nn.PositionMean())
    x = rng.standard_normal((5, 12, 6))
    base = stack.forward(x)
    for s in range(1, 12):
        assert np.abs(stack.forward(np.roll(x, s, axis=1)) - base).max() <= 1e-12


def test_freeze_cross_blocks_cross_gradients(rng):
    layer = nn.CyclicFC(4, 3, 3, "identity", rng, "glorot")
    layer.freeze_cross = True
    layer.forward(rng.standard_normal((2, 4, 3)))
    layer.backward(rng.standard_normal((2, 4, 3)))
    assert not layer.grads["W"][1:].any() and layer.grads["W"][0].any()


# --- gradients -----------------------------------------------------------------

def test_gradients_all_layer_kinds():
    rng = np.random.default_rng(2024)
    worst: dict[str, float] = {}
    counts: dict[str, int] = {}
    for _ in range(20):
        cases = layer_cases(rng) + [(XentAsLayer(rng.integers(0, 4, 3)), rng.standard_normal((3, 4)))]
        for layer, x in cases:
            out = layer.forward(x)
            u = rng.standard_normal(out.shape)
            analytic = {"x": layer.backward(u)} | {k: v.copy() for k, v in layer.grads.items()}
            numeric = numeric_grads(layer, x, u)
            err = max(rel_err(analytic[k], numeric[k]) for k in numeric)
            worst[layer.kind] = max(worst.get(layer.kind, 0.0), err)
            counts[layer.kind] = counts.get(layer.kind, 0) + 1
    assert set(worst) >= {"conv2d", "relu", "maxpool", "dense", "cyclic_fc", "position_mean", "softmax_xent"}
    assert all(c == 20 for c in counts.values())
    assert max(worst.values()) <= 1e-6, worst


def test_relu_backward_examples():
    r = nn.ReLU()
    r.forward(np.array([-1.0, 2.0]))
    assert r.backward(np.array([5.0, 7.0])).tolist() == [0.0, 7.0]


def test_maxpool_tie_goes_to_first():
    p = nn.MaxPool2d(2)
    x = np.ones((1, 1, 2, 2))
    p.forward(x)
    assert p.backward(np.ones((1, 1, 1, 1)))[0, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]
    x = np.array([[0.0, 3.0], [3.0, 1.0]]).reshape(1, 1, 2, 2)
    p.forward(x)
    assert p.backward(np.full((1, 1, 1, 1), 2.0))[0, 0].tolist() == [[0.0, 2.0], [0.0, 0.0]]


def test_maxpool_routes_only_to_argmax(rng):
    p = nn.MaxPool2d(2, 3)
    x = kink_free(rng, (2, 3, 4, 6))
    out = p.forward(x)
    dx = p.backward(np.ones_like(out))
    assert dx.sum() == out.size and np.array_equal(x[dx == 1], np.sort(out.ravel())[np.argsort(np.argsort(x[dx == 1]))])


def test_position_mean_backward():
    m = nn.PositionMean()
    m.forward(np.zeros((1, 4, 2)))
    assert np.allclose(m.backward(np.ones((1, 2))), 0.25)


def test_split_columns_layout():
    x = np.arange(2 * 1 * 2 * 6.0).reshape(2, 1, 2, 6)
    y = nn.SplitColumns(3).forward(x)
    assert y.shape == (2, 3, 4)
    assert y[0, 1].tolist() == [2, 3, 8, 9]


def test_softmax_xent_uniform():
    loss = nn.SoftmaxCrossEntropy().forward(np.zeros((4, 8)), np.arange(4))
    assert loss == pytest.approx(math.log(8), abs=1e-15)


def test_non_finite_is_an_error():
    with pytest.raises(FloatingPointError):
        nn.layer_forward_backward(nn.ReLU(), np.array([[np.nan]]), np.ones((1, 1)))
    with pytest.raises(FloatingPointError):
        nn.SoftmaxCrossEntropy().forward(np.array([[np.inf, 0.0]]), np.array([0]))
    p, g = {"w": np.zeros(2)}, {"w": np.array([np.nan, 0.0])}
    with pytest.raises(FloatingPointError):
        nn.sgd_step(p, g, {}, nn.SgdConfig(lr=0.1))


def test_forward_backward_shape_mismatch():
    with pytest.raises(ValueError):
        nn.layer_forward_backward(nn.Dense(3, 2), np.zeros((1, 3)), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        nn.cyclic_fc(np.zeros((3, 2)), np.zeros((4, 2, 2)), np.zeros((4, 2)))


# --- sgd -----------------------------------------------------------------------

def test_sgd_plain_descent():
    p, g = {"w": np.array([1.0, 2.0])}, {"w": np.array([0.5, -1.0])}
    nn.sgd_step(p, g, {}, nn.SgdConfig(lr=0.1, momentum=0, weight_decay=0))
    assert np.allclose(p["w"], [0.95, 2.1], atol=1e-15)


def test_sgd_momentum_decay():
    p, v = {"w": np.array([3.0])}, {"w": np.array([1.0])}
    nn.sgd_step(p, {"w": np.zeros(1)}, v, nn.SgdConfig(lr=0.7, momentum=0.9, weight_decay=0))
    assert v["w"][0] == pytest.approx(0.9) and p["w"][0] == pytest.approx(3.9)


def test_sgd_two_steps():
    p, v = {"w": np.zeros(1)}, {}
    cfg = nn.SgdConfig(lr=0.1, momentum=0.9, weight_decay=0)
    nn.sgd_step(p, {"w": np.ones(1)}, v, cfg)
    assert p["w"][0] == pytest.approx(-0.1, abs=1e-15)
    nn.sgd_step(p, {"w": np.ones(1)}, v, cfg)
    assert p["w"][0] == pytest.approx(-0.29, abs=1e-15)


def test_weight_decay_skips_biases():
    p = {"fc.W": np.ones(2), "fc.b": np.ones(2)}
    g = {k: np.zeros(2) for k in p}
    nn.sgd_step(p, g, {}, nn.SgdConfig(lr=1.0, momentum=0, weight_decay=0.5))
    assert p["fc.W"].tolist() == [0.5, 0.5] and p["fc.b"].tolist() == [1.0, 1.0]


def test_lr_multiplier():
    p = {"a": np.zeros(1), "b": np.zeros(1)}
    g = {"a": np.ones(1), "b": np.ones(1)}
    nn.sgd_step(p, g, {}, nn.SgdConfig(lr=0.01, momentum=0, weight_decay=0), {"a": 10.0})
    assert p["a"][0] == pytest.approx(-0.1) and p["b"][0] == pytest.approx(-0.01)


def test_lr_grid():
    grid = nn.lr_grid()
    assert len(grid) == 7 and grid[0] == 1e-5 and grid[-1] == pytest.approx(1e-2)
    assert np.allclose(np.diff(np.log10(grid)), 0.5)
    assert nn.SgdConfig().lr in [pytest.approx(x) for x in grid]


def test_sgd_defaults():
    cfg = nn.SgdConfig()
    assert (cfg.momentum, cfg.weight_decay, cfg.batch_size) == (0.9, 0.0005, 32)
