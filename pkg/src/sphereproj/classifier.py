"""Depth- and contour-projection classifiers, their training schedules,
prediction, fusion and evaluation."""

from __future__ import annotations

import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import neural as nn
from .formats import atomic_write

log = logging.getLogger(__name__)


# --- configs -----------------------------------------------------------------


@dataclass(frozen=True)
class DepthNetConfig:
    lat_size: tuple[int, int] = (120, 180)
    vert_size: tuple[int, int] = (90, 30)
    l_v: int = 12
    channels: tuple[int, ...] = (8, 16, 32)
    kernel: int = 3
    # latitude pools divide the 15-column shift of a 30 degree turn exactly
    lat_pools: tuple[tuple[int, int], ...] = ((2, 3), (2, 5), (2, 1))
    vert_pools: tuple[tuple[int, int], ...] = ((2, 2), (2, 2), (2, 2))
    feature: int = 64
    activation: str = "relu"

    def __post_init__(self):
        if len(self.lat_pools) != len(self.channels) or len(self.vert_pools) != len(self.channels):
            raise ValueError("one pool per conv layer is required")
        w = self.lat_size[1]
        col_pool = math.prod(p[1] for p in self.lat_pools)
        if w % self.l_v or (w // self.l_v) % col_pool:
            raise ValueError(f"latitude width {w} must split into {self.l_v} slots divisible by pool {col_pool}")


@dataclass(frozen=True)
class ContourNetConfig:
    views_per_ring: int = 12
    rings: int = 3
    view_size: int = 64
    # central crop per view, 0 keeps the whole view; at 45 degrees FOV from
    # 3 diagonals away the object fills about the middle half of each view
    crop: int = 32
    channels: tuple[int, ...] = (4, 8, 16)
    kernel: int = 3
    first_stride: int = 1
    pools: tuple[tuple[int, int], ...] = ((2, 2), (2, 2), (2, 2))
    feature: int = 64
    activation: str = "relu"

    @property
    def cell(self) -> int:
        return self.crop or self.view_size

    def __post_init__(self):
        if len(self.pools) != len(self.channels):
            raise ValueError("one pool per conv layer is required")
        red = self.first_stride * math.prod(p[1] for p in self.pools)
        if self.cell % red:
            raise ValueError(f"view width {self.cell} not divisible by total column reduction {red}")
        if self.crop and (self.crop > self.view_size or (self.view_size - self.crop) % 2):
            raise ValueError("crop must be <= view_size with an even margin")


@dataclass(frozen=True)
class Schedule:
    epochs_vert: int = 3
    epochs_lat: int = 3
    epochs_joint: int = 2
    epochs_contour: int = 4
    head_warmup: int = 20  # passes fitting the fresh joint head on frozen features
    lr_step: int = 0  # epochs between lr drops, 0 = constant
    lr_gamma: float = 0.1
    fresh_lr_mult: float = 10.0


# --- inputs --------------------------------------------------------------------


@dataclass
class DepthInputs:
    lat: np.ndarray  # (N, H, W) normalised latitude strips
    vert: np.ndarray  # (N, l, h, w) normalised vertical strips

    def __len__(self):
        return len(self.lat)

    def take(self, idx) -> "DepthInputs":
        return DepthInputs(self.lat[idx], self.vert[idx])

    def batch(self, idx):
        lat = standardize(np.asarray(self.lat[idx], dtype=np.float64))[:, None]
        vert = standardize(np.asarray(self.vert[idx], dtype=np.float64))[:, :, None]
        return lat, vert


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per sample (over all non-batch axes).

    Convex shapes are hit by every ray, so the class signal is a few percent
    of ripple on a large constant; removing it conditions the first layer.
    Global statistics leave cyclic shifts untouched.
    """
    axes = tuple(range(1, x.ndim))
    mu = x.mean(axis=axes, keepdims=True)
    sd = x.std(axis=axes, keepdims=True)
    return (x - mu) / np.where(sd > 1e-12, sd, 1.0)


@dataclass
class ContourInputs:
    views: np.ndarray  # (N, rings, V, S, S) uint8 or float in [0, 1]

    def __len__(self):
        return len(self.views)

    def take(self, idx) -> "ContourInputs":
        return ContourInputs(self.views[idx])

    def batch(self, idx, crop: int = 0):
        v = self.views[idx]
        v = v.astype(np.float64) / 255.0 if v.dtype == np.uint8 else np.asarray(v, dtype=np.float64)
        n, rings, per, s, _ = v.shape
        if crop:
            a = (s - crop) // 2
            v = v[..., a:a + crop, a:a + crop]
            s = crop
        return v.transpose(0, 1, 3, 2, 4).reshape(n, 1, rings * s, per * s)


def depth_features(depth: np.ndarray, radius: float) -> np.ndarray:
    """Network input from raw strip depth: max(0, 3 d / R - 2).

    Surface points lie within one bounding diagonal (R / 3) of the center, so
    hits satisfy d >= 2R/3 and map to 1 - r / diagonal; misses (d = 0) and
    cells blended with misses fall continuously to 0.
    """
    return np.maximum(3.0 * np.asarray(depth) / radius - 2.0, 0.0)


# --- networks ------------------------------------------------------------------


class Net:
    """Named layers plus the flat parameter view the optimiser works on."""

    def __init__(self):
        self.layers: dict[str, nn.Layer] = {}

    def add(self, name: str, layer: nn.Layer) -> nn.Layer:
        self.layers[name] = layer
        return layer

    def params(self, prefixes=None) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self.layers.items():
            if prefixes is not None and not lname.startswith(tuple(prefixes)):
                continue
            for pname, arr in layer.params.items():
                out[f"{lname}.{pname}"] = arr
        return out

    def grads(self, prefixes=None) -> dict[str, np.ndarray]:
        out = {}
        for lname, layer in self.layers.items():
            if prefixes is not None and not lname.startswith(tuple(prefixes)):
                continue
            for pname, arr in layer.grads.items():
                out[f"{lname}.{pname}"] = arr
        return out

    def load(self, params: dict[str, np.ndarray], strict: bool = True):
        own = self.params()
        missing = set(own) - set(params)
        if strict and missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, arr in params.items():
            if name not in own:
                if strict:
                    raise KeyError(f"unexpected parameter {name}")
                continue
            if own[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {own[name].shape} vs {arr.shape}")
            own[name][...] = arr


def _conv_stack(net: Net, prefix: str, c_in: int, channels, kernel, pools, padding, rng,
                first_stride: int = 1, first_kernel: int | None = None) -> nn.Sequential:
    layers = []
    for i, (c, pool) in enumerate(zip(channels, pools)):
        k = first_kernel if (i == 0 and first_kernel) else kernel
        conv = net.add(f"{prefix}.conv{i}", nn.Conv2d(c_in, c, k, padding, first_stride if i == 0 else 1, rng))
        layers += [conv, nn.ReLU()]
        if tuple(pool) != (1, 1):
            layers.append(nn.MaxPool2d(*pool))
        c_in = c
    return nn.Sequential(*layers)


def _out_hw(h, w, pools, first_stride=1):
    h, w = -(-h // first_stride), -(-w // first_stride)
    for ph, pw in pools:
        h, w = h // ph, w // pw
    return h, w


class DepthNet(Net):
    """Two-branch network over the latitude strip and the vertical strips.

    Each branch ends in per-position features -> cyclic FC -> mean over the
    l positions, so whole-branch outputs are invariant to cyclic shifts.
    Heads: ``head_vert`` and ``head_lat`` for the single-branch stages,
    ``head`` over the concatenated features for the joint stage.
    """

    def __init__(self, cfg: DepthNetConfig, n_classes: int, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.n_classes = n_classes
        rng = np.random.default_rng(seed)
        l, k, f = cfg.l_v, cfg.kernel, cfg.feature
        c_last = cfg.channels[-1]

        self.vert_conv = _conv_stack(self, "vert", 1, cfg.channels, k, cfg.vert_pools, ("zero", "zero"), rng)
        vh, vw = _out_hw(*cfg.vert_size, cfg.vert_pools)
        self.vert_fc = self.add("vert.fc", nn.Dense(c_last * vh * vw, f, rng))
        self.vert_cyc = self.add("vert.cyc", nn.CyclicFC(l, f, f, cfg.activation, rng))
        self.vert_tail = nn.Sequential(nn.UnfoldPositions(l), self.vert_fc, nn.ReLU(), self.vert_cyc, nn.PositionMean())

        self.lat_conv = _conv_stack(self, "lat", 1, cfg.channels, k, cfg.lat_pools, ("zero", "circular"), rng)
        lh, lw = _out_hw(*cfg.lat_size, cfg.lat_pools)
        self.lat_fc = self.add("lat.fc", nn.Dense(c_last * lh * (lw // l), f, rng))
        self.lat_cyc = self.add("lat.cyc", nn.CyclicFC(l, f, f, cfg.activation, rng))
        self.lat_tail = nn.Sequential(nn.SplitColumns(l), self.lat_fc, nn.ReLU(), self.lat_cyc, nn.PositionMean())

        self.head_vert = self.add("head_vert", nn.Dense(f, n_classes, rng))
        self.head_lat = self.add("head_lat", nn.Dense(f, n_classes, rng))
        self.head = self.add("head", nn.Dense(2 * f, n_classes, rng))
        self.vert_conv.layers[0].skip_input_grad = True
        self.lat_conv.layers[0].skip_input_grad = True

    STAGE_PREFIXES = {
        "vert": ("vert.", "head_vert"),
        "lat": ("lat.", "head_lat"),
        "joint": ("vert.", "lat.", "head."),
    }

    def vert_features(self, vert):
        n, l = vert.shape[:2]
        x = self.vert_conv.forward(vert.reshape(n * l, *vert.shape[2:]))
        return self.vert_tail.forward(x)

    def lat_features(self, lat):
        return self.lat_tail.forward(self.lat_conv.forward(lat))

    def forward(self, lat, vert, stage="joint"):
        self._stage = stage
        if stage == "vert":
            return self.head_vert.forward(self.vert_features(vert))
        if stage == "lat":
            return self.head_lat.forward(self.lat_features(lat))
        fv = self.vert_features(vert)
        fl = self.lat_features(lat)
        self._fdim = fv.shape[1]
        return self.head.forward(np.concatenate([fv, fl], axis=1))

    def backward(self, g):
        stage = self._stage
        if stage == "vert":
            self.vert_conv.backward(self.vert_tail.backward(self.head_vert.backward(g)))
        elif stage == "lat":
            self.lat_conv.backward(self.lat_tail.backward(self.head_lat.backward(g)))
        else:
            gf = self.head.backward(g)
            self.vert_conv.backward(self.vert_tail.backward(gf[:, :self._fdim]))
            self.lat_conv.backward(self.lat_tail.backward(gf[:, self._fdim:]))


class ContourNet(Net):
    """Shared periodic conv stack over the montage, cut into azimuth slots,
    then per-slot dense -> cyclic FC -> mean over slots -> classifier."""

    STAGE_PREFIXES = {"contour": ("conv", "fc", "cyc", "head")}

    def __init__(self, cfg: ContourNetConfig, n_classes: int, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.n_classes = n_classes
        rng = np.random.default_rng(seed)
        l, f = cfg.views_per_ring, cfg.feature
        self.conv = _conv_stack(self, "conv", 1, cfg.channels, cfg.kernel, cfg.pools, ("zero", "circular"), rng,
                                first_stride=cfg.first_stride)
        h, w = _out_hw(cfg.rings * cfg.cell, l * cfg.cell, cfg.pools, cfg.first_stride)
        self.fc = self.add("fc", nn.Dense(cfg.channels[-1] * h * (w // l), f, rng))
        self.cyc = self.add("cyc", nn.CyclicFC(l, f, f, cfg.activation, rng))
        self.head = self.add("head", nn.Dense(f, n_classes, rng))
        self.tail = nn.Sequential(nn.SplitColumns(l), self.fc, nn.ReLU(), self.cyc, nn.PositionMean(), self.head)
        self.conv.layers[0].skip_input_grad = True

    def forward(self, x, stage="contour"):
        return self.tail.forward(self.conv.forward(x))

    def backward(self, g):
        self.conv.backward(self.tail.backward(g))


# --- trained model + serialization ----------------------------------------------

SPJM_MAGIC = b"SPJM"


@dataclass
class TrainedModel:
    kind: str  # "depth" or "contour"
    params: dict[str, np.ndarray]
    config: dict[str, str]
    class_names: list[str]
    seed: int = 0
    history: list[dict] = field(default_factory=list)

    def build(self) -> Net:
        net = make_net(self.kind, self.config, len(self.class_names), self.seed)
        net.load(self.params)
        return net


def _cfg_text(cfg: dict[str, str]) -> str:
    return "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))


def encode_model(model: TrainedModel) -> bytes:
    cfg = dict(model.config)
    cfg["model.kind"] = model.kind
    cfg["model.classes"] = ",".join(model.class_names)
    cfg["model.seed"] = str(model.seed)
    # wall-clock timings stay out of the file so reruns give identical bytes
    for i, h in enumerate(model.history):
        cfg[f"history.{i:04d}"] = " ".join(f"{k}:{h[k]}" for k in sorted(h) if k != "seconds")
    out = [SPJM_MAGIC, struct.pack("<II", 1, len(model.params))]
    for name in sorted(model.params):
        arr = np.asarray(model.params[name])
        nb = name.encode()
        out.append(struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    blob = _cfg_text(cfg).encode()
    out.append(struct.pack("<I", len(blob)) + blob)
    return b"".join(out)


def decode_model(data: bytes) -> TrainedModel:
    try:
        return _decode_model(data)
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise ValueError(f"corrupt SPJM model file: {exc}") from None


def _decode_model(data: bytes) -> TrainedModel:
    if data[:4] != SPJM_MAGIC:
        raise ValueError("not an SPJM model file")
    version, count = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise ValueError(f"unsupported model version {version}")
    pos = 12
    params = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + ln].decode()
        pos += ln
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        size = math.prod(dims)
        if pos + 4 * size > len(data):
            raise ValueError("truncated SPJM model file")
        params[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float64)
        pos += 4 * size
    (ln,) = struct.unpack_from("<I", data, pos)
    pos += 4
    cfg = {}
    for line in data[pos:pos + ln].decode().splitlines():
        k, _, v = line.partition("=")
        cfg[k] = v
    kind = cfg.pop("model.kind")
    classes = cfg.pop("model.classes").split(",")
    seed = int(cfg.pop("model.seed"))
    history = []
    for k in sorted(k for k in cfg if k.startswith("history.")):
        rec = {}
        for tok in cfg.pop(k).split():
            a, _, b = tok.partition(":")
            rec[a] = b if a == "stage" else float(b) if "." in b or "e" in b else int(b)
        history.append(rec)
    return TrainedModel(kind, params, cfg, classes, seed, history)


def save_model(model: TrainedModel, path) -> None:
    atomic_write(path, encode_model(model))


def load_model(path) -> TrainedModel:
    return decode_model(Path(path).read_bytes())


def depth_config_dict(cfg: DepthNetConfig) -> dict[str, str]:
    return {f"depthnet.{k}": _fmt(v) for k, v in asdict(cfg).items()}


def contour_config_dict(cfg: ContourNetConfig) -> dict[str, str]:
    return {f"contournet.{k}": _fmt(v) for k, v in asdict(cfg).items()}


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ";".join(_fmt(x) for x in v) if v and isinstance(v[0], (tuple, list)) else ",".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _parse_tuple(text: str, nested=False):
    if nested:
        return tuple(_parse_tuple(p) for p in text.split(";"))
    return tuple(int(x) for x in text.split(","))


def depth_config_from(d: dict[str, str]) -> DepthNetConfig:
    g = lambda k: d[f"depthnet.{k}"]  # noqa: E731
    return DepthNetConfig(
        lat_size=_parse_tuple(g("lat_size")), vert_size=_parse_tuple(g("vert_size")), l_v=int(g("l_v")),
        channels=_parse_tuple(g("channels")), kernel=int(g("kernel")),
        lat_pools=_parse_tuple(g("lat_pools"), True), vert_pools=_parse_tuple(g("vert_pools"), True),
        feature=int(g("feature")), activation=g("activation"))


def contour_config_from(d: dict[str, str]) -> ContourNetConfig:
    g = lambda k: d[f"contournet.{k}"]  # noqa: E731
    return ContourNetConfig(
        views_per_ring=int(g("views_per_ring")), rings=int(g("rings")), view_size=int(g("view_size")),
        crop=int(g("crop")), channels=_parse_tuple(g("channels")), kernel=int(g("kernel")),
        first_stride=int(g("first_stride")), pools=_parse_tuple(g("pools"), True),
        feature=int(g("feature")), activation=g("activation"))


def make_net(kind: str, config: dict[str, str], n_classes: int, seed: int = 0) -> Net:
    if kind == "depth":
        return DepthNet(depth_config_from(config), n_classes, seed)
    if kind == "contour":
        return ContourNet(contour_config_from(config), n_classes, seed)
    raise ValueError(f"unknown model kind {kind!r}")


# --- training --------------------------------------------------------------------


def _round_f32(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    # saved models hold f32; rounding here makes save/load lossless
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}


def _forward(net: Net, inputs, idx, stage):
    if isinstance(net, DepthNet):
        lat, vert = inputs.batch(idx)
        return net.forward(lat, vert, stage)
    return net.forward(inputs.batch(idx, net.cfg.crop), stage)


def logits_for(net: Net, inputs, stage=None, batch_size: int = 64) -> np.ndarray:
    stage = stage or ("joint" if isinstance(net, DepthNet) else "contour")
    out = []
    for s in range(0, len(inputs), batch_size):
        out.append(_forward(net, inputs, np.arange(s, min(s + batch_size, len(inputs))), stage))
    return np.concatenate(out) if out else np.zeros((0, net.n_classes))


def fit(net: Net, stage: str, inputs, labels: np.ndarray, sgd: nn.SgdConfig, epochs: int,
        seed: int, lr_mult: dict[str, float], schedule: Schedule, history: list) -> float:
    """Mini-batch SGD over the parameters of ``stage``; returns the last epoch's mean loss."""
    if len(inputs) == 0:
        raise ValueError("empty training set")
    labels = np.asarray(labels)
    loss_fn = nn.SoftmaxCrossEntropy()
    prefixes = net.STAGE_PREFIXES[stage]
    params = net.params(prefixes)
    velocity: dict[str, np.ndarray] = {}
    rng = np.random.default_rng([seed, len(history)])
    last = math.nan
    for epoch in range(epochs):
        lr = sgd.lr * (schedule.lr_gamma ** (epoch // schedule.lr_step) if schedule.lr_step else 1.0)
        cfg = nn.SgdConfig(lr, sgd.momentum, sgd.weight_decay, sgd.batch_size)
        order = rng.permutation(len(inputs))
        total, correct, t0 = 0.0, 0, time.perf_counter()
        for b, s in enumerate(range(0, len(order), sgd.batch_size)):
            idx = np.sort(order[s:s + sgd.batch_size])
            logits = _forward(net, inputs, idx, stage)
            try:
                loss = loss_fn.forward(logits, labels[idx])
            except FloatingPointError as exc:
                raise FloatingPointError(f"{exc} at stage {stage} epoch {epoch} batch {b}") from None
            net.backward(loss_fn.backward())
            nn.sgd_step(params, net.grads(prefixes), velocity, cfg, lr_mult)
            total += loss * len(idx)
            correct += int((logits.argmax(1) == labels[idx]).sum())
        last = total / len(order)
        rec = {"stage": stage, "epoch": epoch, "loss": round(last, 6),
               "acc": round(correct / len(order), 6), "seconds": round(time.perf_counter() - t0, 3)}
        history.append(rec)
        log.info("stage=%s epoch=%d loss=%.4f acc=%.4f (%.1fs)", stage, epoch, last, rec["acc"], rec["seconds"])
    return last


def _lr_mult(params: dict, fresh: set[str], mult: float) -> dict[str, float]:
    return {k: (mult if k in fresh else 1.0) for k in params}


def train_depth(inputs: DepthInputs, labels, class_names, cfg: DepthNetConfig = DepthNetConfig(),
                sgd: nn.SgdConfig | None = None, seed: int = 0, schedule: Schedule = Schedule(),
                extra_config: dict | None = None) -> TrainedModel:
    """Three stages: vertical branch (cross links frozen at zero), latitude
    branch, then both branches jointly under a freshly initialised head."""
    sgd = sgd or nn.SgdConfig()
    labels = np.asarray(labels)
    net = DepthNet(cfg, len(class_names), seed)
    history: list[dict] = []
    m = schedule.fresh_lr_mult

    net.vert_cyc.freeze_cross = True
    p = net.params(net.STAGE_PREFIXES["vert"])
    fit(net, "vert", inputs, labels, sgd, schedule.epochs_vert, seed, _lr_mult(p, set(p), m), schedule, history)
    net.vert_cyc.freeze_cross = False

    p = net.params(net.STAGE_PREFIXES["lat"])
    fit(net, "lat", inputs, labels, sgd, schedule.epochs_lat, seed, _lr_mult(p, set(p), m), schedule, history)

    _warm_head(net, inputs, labels, sgd, seed, schedule, history)

    p = net.params(net.STAGE_PREFIXES["joint"])
    fresh = {"head.W", "head.b"}
    fit(net, "joint", inputs, labels, sgd, schedule.epochs_joint, seed, _lr_mult(p, fresh, m), schedule, history)

    config = depth_config_dict(cfg) | (extra_config or {})
    return TrainedModel("depth", _round_f32(net.params()), config, list(class_names), seed, history)


def joint_features(net: DepthNet, inputs: DepthInputs, batch_size: int = 64) -> np.ndarray:
    out = []
    for s in range(0, len(inputs), batch_size):
        lat, vert = inputs.batch(np.arange(s, min(s + batch_size, len(inputs))))
        out.append(np.concatenate([net.vert_features(vert), net.lat_features(lat)], axis=1))
    return np.concatenate(out)


def _warm_head(net: DepthNet, inputs, labels, sgd, seed, schedule: Schedule, history):
    """Fit the freshly initialised joint head on the frozen branch features
    (a convex problem), so joint training starts from both branches' skill
    instead of a random classifier."""
    if schedule.head_warmup <= 0:
        return
    feats = joint_features(net, inputs)
    loss_fn = nn.SoftmaxCrossEntropy()
    params, velocity = net.head.params, {}
    cfg = nn.SgdConfig(sgd.lr, sgd.momentum, sgd.weight_decay, sgd.batch_size)
    mult = {k: schedule.fresh_lr_mult for k in params}
    rng = np.random.default_rng([seed, len(history)])
    for _ in range(schedule.head_warmup):
        order = rng.permutation(len(feats))
        total = 0.0
        for s in range(0, len(order), sgd.batch_size):
            idx = np.sort(order[s:s + sgd.batch_size])
            total += loss_fn.forward(net.head.forward(feats[idx]), labels[idx]) * len(idx)
            net.head.backward(loss_fn.backward())
            nn.sgd_step(params, net.head.grads, velocity, cfg, mult)
    history.append({"stage": "head", "epoch": schedule.head_warmup - 1, "loss": round(total / len(order), 6),
                    "acc": 0.0, "seconds": 0.0})


def train_contour(inputs: ContourInputs, labels, class_names, cfg: ContourNetConfig = ContourNetConfig(),
                  sgd: nn.SgdConfig | None = None, seed: int = 0, schedule: Schedule = Schedule(),
                  extra_config: dict | None = None) -> TrainedModel:
    """Single-stage training from scratch."""
    sgd = sgd or nn.SgdConfig()
    net = ContourNet(cfg, len(class_names), seed)
    history: list[dict] = []
    p = net.params()
    fit(net, "contour", inputs, labels, sgd, schedule.epochs_contour, seed,
        _lr_mult(p, set(p), schedule.fresh_lr_mult), schedule, history)
    config = contour_config_dict(cfg) | (extra_config or {})
    return TrainedModel("contour", _round_f32(net.params()), config, list(class_names), seed, history)


# --- inference ---------------------------------------------------------------------


def predict_proba(model: TrainedModel | Net, inputs, net: Net | None = None) -> np.ndarray:
    net = net or (model if isinstance(model, Net) else model.build())
    return nn.softmax(logits_for(net, inputs))


def fuse(p_depth: np.ndarray, p_contour: np.ndarray) -> np.ndarray:
    """Elementwise mean of two probability vectors (or row-stacked batches)."""
    a, b = np.asarray(p_depth, float), np.asarray(p_contour, float)
    if a.shape != b.shape:
        raise ValueError(f"cannot fuse shapes {a.shape} and {b.shape}")
    return (a + b) / 2.0


@dataclass
class AccuracyReport:
    instance_accuracy: float
    class_accuracy: float
    per_class: dict[str, float]
    n: int
    missing: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"instance_accuracy={self.instance_accuracy:.2f}", f"class_accuracy={self.class_accuracy:.2f}"]
        out += [f"per_class.{k}={v:.2f}" for k, v in self.per_class.items()]
        return out

    def table(self) -> str:
        w = max([len(k) for k in self.per_class] + [5])
        rows = [f"{'class':<{w}}  accuracy"] + [f"{k:<{w}}  {v:8.2f}" for k, v in self.per_class.items()]
        rows += ["", f"{'class-mean':<{w}}  {self.class_accuracy:8.2f}", f"{'instance':<{w}}  {self.instance_accuracy:8.2f}"]
        return "\n".join(rows)


def evaluate(pred: np.ndarray, labels: np.ndarray, class_names) -> AccuracyReport:
    """Instance accuracy and mean per-class recall, in percent.

    ``pred`` holds class indices or a probability matrix. Classes absent from
    ``labels`` are left out of the class mean with a warning.
    """
    pred = np.asarray(pred)
    if pred.ndim == 2:
        pred = pred.argmax(axis=1)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate an empty split")
    per_class, missing = {}, []
    for c, name in enumerate(class_names):
        mask = labels == c
        if not mask.any():
            log.warning("class %s absent from split; excluded from class accuracy", name)
            missing.append(name)
            continue
        per_class[name] = 100.0 * float((pred[mask] == c).mean())
    inst = 100.0 * float((pred == labels).mean())
    return AccuracyReport(inst, float(np.mean(list(per_class.values()))), per_class, len(labels), missing)
