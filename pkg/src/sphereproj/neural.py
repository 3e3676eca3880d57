"""Dense-tensor network layers with hand-written reverse-mode gradients.

Every layer follows the same protocol: ``forward(x)`` caches what the backward
pass needs and ``backward(g)`` returns the input gradient while filling
``grads`` (same keys as ``params``). Tensors are float64 and batch-first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {where}")
    return x


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv2d(Layer):
    """Same-size cross-correlation with per-axis padding.

    ``padding`` gives the mode for (rows, cols): ``"zero"`` or ``"circular"``.
    Kernels must be odd-sized; stride s keeps every s-th output position.
    """

    kind = "conv2d"

    def __init__(self, c_in, c_out, kernel=(3, 3), padding=("zero", "zero"), stride=1, rng=None):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("kernel sizes must be odd")
        for mode in padding:
            if mode not in ("zero", "circular"):
                raise ValueError(f"unknown padding mode {mode!r}")
        self.c_in, self.c_out = c_in, c_out
        self.kh, self.kw = kh, kw
        self.padding = tuple(padding)
        self.stride = (stride, stride) if isinstance(stride, int) else tuple(stride)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = glorot(rng, (c_out, c_in, kh, kw), c_in * kh * kw, c_out * kh * kw)
        self.params["b"] = np.zeros(c_out)
        # a first layer never needs d(loss)/d(input); skipping it saves the col2im
        self.skip_input_grad = False

    def _pad(self, x):
        ph, pw = self.kh // 2, self.kw // 2
        if ph and ph > x.shape[2] and self.padding[0] == "circular":
            raise ValueError("circular padding wider than the axis")
        if pw and pw > x.shape[3] and self.padding[1] == "circular":
            raise ValueError("circular padding wider than the axis")
        if ph:
            x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (0, 0)),
                       mode="wrap" if self.padding[0] == "circular" else "constant")
        if pw:
            x = np.pad(x, ((0, 0), (0, 0), (0, 0), (pw, pw)),
                       mode="wrap" if self.padding[1] == "circular" else "constant")
        return x

    def _windows(self, xp):
        sh, sw = self.stride
        return sliding_window_view(xp, (self.kh, self.kw), axis=(2, 3))[:, :, ::sh, ::sw]

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(f"conv2d expects (N, {self.c_in}, H, W), got {x.shape}")
        xp = self._pad(x)
        win = self._windows(xp)
        n, _, ho, wo = win.shape[:4]
        # im2col: one row per output pixel, kept for the weight gradient
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, -1)
        self._cache = (x.shape, xp.shape, cols, (n, ho, wo))
        out = cols @ self.params["W"].reshape(self.c_out, -1).T + self.params["b"]
        return np.ascontiguousarray(out.reshape(n, ho, wo, self.c_out).transpose(0, 3, 1, 2))

    def backward(self, g):
        x_shape, xp_shape, cols, (n, ho, wo) = self._cache
        sh, sw = self.stride
        gm = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, self.c_out)
        self.grads["W"] = (gm.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = gm.sum(axis=0)
        if self.skip_input_grad:
            return None
        dcols = (gm @ self.params["W"].reshape(self.c_out, -1)).reshape(n, ho, wo, self.c_in, self.kh, self.kw)
        dcols = dcols.transpose(0, 3, 4, 5, 1, 2)
        dxp = np.zeros(xp_shape)
        for a in range(self.kh):
            for b in range(self.kw):
                dxp[:, :, a:a + sh * (ho - 1) + 1:sh, b:b + sw * (wo - 1) + 1:sw] += dcols[:, :, a, b]
        ph, pw = self.kh // 2, self.kw // 2
        h, w = x_shape[2], x_shape[3]
        if pw:
            core = dxp[:, :, :, pw:pw + w].copy()
            if self.padding[1] == "circular":
                core[:, :, :, w - pw:] += dxp[:, :, :, :pw]
                core[:, :, :, :pw] += dxp[:, :, :, pw + w:]
            dxp = core
        if ph:
            core = dxp[:, :, ph:ph + h, :].copy()
            if self.padding[0] == "circular":
                core[:, :, h - ph:, :] += dxp[:, :, :ph, :]
                core[:, :, :ph, :] += dxp[:, :, ph + h:, :]
            dxp = core
        return dxp

    def __repr__(self):
        return (f"Conv2d({self.c_in}->{self.c_out}, {self.kh}x{self.kw}, "
                f"pad={self.padding}, stride={self.stride})")


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, g):
        return g * self._mask


@nb.njit(cache=True)
def _pool_fwd(x, ph, pw, h2, w2):
    n_, c_ = x.shape[0], x.shape[1]
    out = np.empty((n_, c_, h2, w2))
    arg = np.empty((n_, c_, h2, w2), np.int32)
    for n in range(n_):
        for c in range(c_):
            for i in range(h2):
                for j in range(w2):
                    best = x[n, c, i * ph, j * pw]
                    k = 0
                    for a in range(ph):
                        for b in range(pw):
                            v = x[n, c, i * ph + a, j * pw + b]
                            if v > best:
                                best = v
                                k = a * pw + b
                    out[n, c, i, j] = best
                    arg[n, c, i, j] = k
    return out, arg


@nb.njit(cache=True)
def _pool_bwd(g, arg, ph, pw, h, w):
    n_, c_, h2, w2 = g.shape
    dx = np.zeros((n_, c_, h, w))
    for n in range(n_):
        for c in range(c_):
            for i in range(h2):
                for j in range(w2):
                    k = arg[n, c, i, j]
                    dx[n, c, i * ph + k // pw, j * pw + k % pw] = g[n, c, i, j]
    return dx


class MaxPool2d(Layer):
    """Non-overlapping max pool; trailing rows/cols that do not fill a window
    are dropped. Ties route the gradient to the first cell in row-major order."""

    kind = "maxpool"

    def __init__(self, ph=2, pw=None):
        super().__init__()
        self.ph = ph
        self.pw = ph if pw is None else pw

    def forward(self, x):
        n, c, h, w = x.shape
        h2, w2 = h // self.ph, w // self.pw
        if h2 == 0 or w2 == 0:
            raise ValueError(f"max pool {self.ph}x{self.pw} larger than input {h}x{w}")
        out, arg = _pool_fwd(np.ascontiguousarray(x, dtype=np.float64), self.ph, self.pw, h2, w2)
        self._cache = (x.shape, arg)
        return out

    def backward(self, g):
        (n, c, h, w), arg = self._cache
        return _pool_bwd(np.ascontiguousarray(g, dtype=np.float64), arg, self.ph, self.pw, h, w)

    def __repr__(self):
        return f"MaxPool2d({self.ph}x{self.pw})"


class Dense(Layer):
    """Affine map over the last axis; leading axes are batch-like."""

    kind = "dense"

    def __init__(self, d_in, d_out, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in, self.d_out = d_in, d_out
        self.params["W"] = glorot(rng, (d_out, d_in), d_in, d_out)
        self.params["b"] = np.zeros(d_out)

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise ValueError(f"dense expects last dim {self.d_in}, got {x.shape}")
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, g):
        x2 = self._x.reshape(-1, self.d_in)
        g2 = g.reshape(-1, self.d_out)
        self.grads["W"] = g2.T @ x2
        self.grads["b"] = g2.sum(axis=0)
        return g @ self.params["W"]

    def __repr__(self):
        return f"Dense({self.d_in}->{self.d_out})"


def cyclic_fc(features: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str = "relu") -> np.ndarray:
    """Direct evaluation of f_i' = act(sum_j W[(i-j) % l] f_j + b[(i-j) % l]).

    ``features`` is (l, d_in) or (N, l, d_in); ``W`` is (l, d_out, d_in) and
    ``b`` is (l, d_out). The bias sits inside the sum over j, so every output
    position receives the sum of all l bias vectors.
    """
    f = np.asarray(features, dtype=np.float64)
    squeeze = f.ndim == 2
    if squeeze:
        f = f[None]
    l = W.shape[0]
    if f.shape[1] != l or f.shape[2] != W.shape[2]:
        raise ValueError(f"cyclic_fc expects (N, {l}, {W.shape[2]}) features, got {f.shape}")
    out = np.zeros((f.shape[0], l, W.shape[1]))
    for i in range(l):
        for j in range(l):
            k = (i - j) % l
            out[:, i] += f[:, j] @ W[k].T + b[k]
    out = _ACT[activation](out)
    return out[0] if squeeze else out


_ACT = {"relu": lambda z: np.maximum(z, 0.0), "identity": lambda z: z}


class CyclicFC(Layer):
    """Cross-linked fully connected layer over l cyclic positions.

    Input (N, l, d_in) -> output (N, l, d_out). Weight k links positions whose
    indices differ by k (mod l); k = 0 is the direct per-position connection.
    With ``freeze_cross`` the cross links W_1..W_{l-1}, b_1..b_{l-1} receive
    zero gradient.
    """

    kind = "cyclic_fc"

    def __init__(self, l, d_in, d_out, activation="relu", rng=None, cross_init="zero"):
        super().__init__()
        if activation not in _ACT:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.l, self.d_in, self.d_out = l, d_in, d_out
        self.activation = activation
        self.freeze_cross = False
        W = np.zeros((l, d_out, d_in))
        W[0] = glorot(rng, (d_out, d_in), d_in, d_out)
        if cross_init == "glorot":
            W[1:] = glorot(rng, (l - 1, d_out, d_in), d_in, d_out)
        self.params["W"] = W
        self.params["b"] = np.zeros((l, d_out))
        i = np.arange(l)
        self._k = (i[:, None] - i[None, :]) % l

    def _block(self):
        # (l*d_out, l*d_in) block-circulant matrix, block (i, j) = W[(i-j) % l]
        blk = self.params["W"][self._k]  # l, l, d_out, d_in
        return blk.transpose(0, 2, 1, 3).reshape(self.l * self.d_out, self.l * self.d_in)

    def forward(self, x):
        n = x.shape[0]
        if x.shape[1:] != (self.l, self.d_in):
            raise ValueError(f"cyclic_fc expects (N, {self.l}, {self.d_in}), got {x.shape}")
        self._x = x
        z = (x.reshape(n, -1) @ self._block().T).reshape(n, self.l, self.d_out)
        z = z + self.params["b"].sum(axis=0)
        self._mask = z > 0 if self.activation == "relu" else None
        return np.where(self._mask, z, 0.0) if self._mask is not None else z

    def backward(self, g):
        n = g.shape[0]
        if self._mask is not None:
            g = np.where(self._mask, g, 0.0)
        g2 = g.reshape(n, -1)
        x2 = self._x.reshape(n, -1)
        dblk = (g2.T @ x2).reshape(self.l, self.d_out, self.l, self.d_in).transpose(0, 2, 1, 3)
        dW = np.zeros_like(self.params["W"])
        for i in range(self.l):
            for j in range(self.l):
                dW[self._k[i, j]] += dblk[i, j]
        db = np.broadcast_to(g.sum(axis=(0, 1)), (self.l, self.d_out)).copy()
        if self.freeze_cross:
            dW[1:] = 0.0
            db[1:] = 0.0
        self.grads["W"] = dW
        self.grads["b"] = db
        return (g2 @ self._block()).reshape(n, self.l, self.d_in)

    def __repr__(self):
        return f"CyclicFC(l={self.l}, {self.d_in}->{self.d_out}, {self.activation})"


class PositionMean(Layer):
    """(N, l, d) -> (N, d): mean over the cyclic positions."""

    kind = "position_mean"

    def forward(self, x):
        self._l = x.shape[1]
        return x.mean(axis=1)

    def backward(self, g):
        return np.repeat(g[:, None, :] / self._l, self._l, axis=1)


class FoldPositions(Layer):
    """(N, l, C, H, W) -> (N*l, C, H, W) so a shared stack sees every position."""

    kind = "fold"

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(-1, *x.shape[2:])

    def backward(self, g):
        return g.reshape(self._shape)


class UnfoldPositions(Layer):
    """(N*l, ...) -> (N, l, prod(...)): per-position feature vectors."""

    kind = "unfold"

    def __init__(self, l):
        super().__init__()
        self.l = l

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(-1, self.l, int(np.prod(x.shape[1:])))

    def backward(self, g):
        return g.reshape(self._shape)


class SplitColumns(Layer):
    """(N, C, H, l*w) -> (N, l, C*H*w): cut the periodic axis into l slots."""

    kind = "split_columns"

    def __init__(self, l):
        super().__init__()
        self.l = l

    def forward(self, x):
        n, c, h, w = x.shape
        if w % self.l:
            raise ValueError(f"width {w} not divisible into {self.l} slots")
        self._shape = x.shape
        return x.reshape(n, c, h, self.l, w // self.l).transpose(0, 3, 1, 2, 4).reshape(n, self.l, -1)

    def backward(self, g):
        n, c, h, w = self._shape
        return g.reshape(n, self.l, c, h, w // self.l).transpose(0, 2, 3, 1, 4).reshape(n, c, h, w)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, *layers: Layer):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
            if g is None:
                break
        return g

    def named_layers(self, prefix=""):
        for i, layer in enumerate(self.layers):
            name = f"{prefix}{i}.{layer.kind}"
            if isinstance(layer, Sequential):
                yield from layer.named_layers(name + ".")
            else:
                yield name, layer

    def __repr__(self):
        return "Sequential(" + ", ".join(repr(l) for l in self.layers) + ")"


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


class SoftmaxCrossEntropy:
    """Mean cross-entropy of integer labels under softmax(logits)."""

    kind = "softmax_xent"

    def forward(self, logits: np.ndarray, labels: np.ndarray) -> float:
        _check_finite(logits, "logits")
        lp = log_softmax(logits)
        self._p = np.exp(lp)
        self._labels = np.asarray(labels)
        loss = float(-lp[np.arange(len(lp)), self._labels].mean())
        if not math.isfinite(loss):
            raise FloatingPointError("non-finite loss")
        return loss

    def backward(self) -> np.ndarray:
        g = self._p.copy()
        g[np.arange(len(g)), self._labels] -= 1.0
        return g / len(g)


def layer_forward_backward(layer: Layer, x: np.ndarray, upstream: np.ndarray):
    """Run one layer both ways: (output, input gradient, parameter gradients)."""
    out = layer.forward(x)
    _check_finite(out, layer.kind)
    if out.shape != upstream.shape:
        raise ValueError(f"upstream gradient shape {upstream.shape} != output shape {out.shape}")
    dx = layer.backward(upstream)
    return out, _check_finite(dx, layer.kind + " backward"), {k: v.copy() for k, v in layer.grads.items()}


# --- optimisation --------------------------------------------------------------


def lr_grid(lo: float = 1e-5, hi: float = 1e-2, step: float = 10 ** 0.5) -> list[float]:
    """Learning rates lo, lo*step, ... up to hi inclusive."""
    n = int(round(math.log(hi / lo) / math.log(step)))
    return [lo * step ** k for k in range(n + 1)]


@dataclass
class SgdConfig:
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    lr_grid: list[float] = field(default_factory=lr_grid)

    def __post_init__(self):
        if not (self.lr > 0 and self.momentum >= 0 and self.weight_decay >= 0 and self.batch_size > 0):
            raise ValueError("SGD settings must be positive")


def is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1] == "b"


def sgd_step(params: dict, grads: dict, velocity: dict, cfg: SgdConfig, lr_mult: dict | None = None):
    """Momentum SGD with L2 weight decay, in place.

    v <- mu v - lr (g + wd p);  p <- p + v.  Biases are not decayed; names
    missing from ``grads`` are left untouched. Returns (params, velocity).
    """
    for name, g in grads.items():
        p = params[name]
        lr = cfg.lr * (lr_mult.get(name, 1.0) if lr_mult else 1.0)
        wd = 0.0 if is_bias(name) else cfg.weight_decay
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(p)
        v *= cfg.momentum
        v -= lr * (g + wd * p) if wd else lr * g
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"non-finite update for {name}")
        p += v
    return params, velocity
