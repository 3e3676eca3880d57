import math

import numpy as np
import pytest

from sphereproj import classifier as C
from sphereproj import neural as nn
from sphereproj.dataset import mesh_contour_inputs, mesh_depth_inputs
from sphereproj.mesh import generate_shape, rotate_about_up

SMALL = C.DepthNetConfig(channels=(4, 8, 16))
NAMES = ["box", "ellipsoid"]


@pytest.fixture(scope="module")
def toy():
    meshes = [generate_shape(k, None, s) for k in NAMES for s in range(20)]
    d = [mesh_depth_inputs(m) for m in meshes]
    depth = C.DepthInputs(np.concatenate([x.lat for x in d]), np.concatenate([x.vert for x in d]))
    contour = C.ContourInputs(np.concatenate([mesh_contour_inputs(m).views for m in meshes]))
    return depth, contour, np.repeat([0, 1], 20)


@pytest.fixture(scope="module")
def depth_model(toy):
    depth, _, y = toy
    # 40 samples: small batches give enough steps per epoch
    return C.train_depth(depth, y, NAMES, SMALL, nn.SgdConfig(batch_size=4), seed=0, schedule=C.Schedule(5, 5, 5))


@pytest.fixture(scope="module")
def contour_model(toy):
    _, contour, y = toy
    return C.train_contour(contour, y, NAMES, seed=0, schedule=C.Schedule(epochs_contour=10))


def test_depth_toy_learns(toy, depth_model):
    depth, _, y = toy
    vert = [h["loss"] for h in depth_model.history if h["stage"] == "vert"]
    assert vert[0] > vert[1] > vert[2]
    assert np.array_equal(C.predict_proba(depth_model, depth).argmax(1), y)


def test_contour_toy_learns(toy, contour_model):
    _, contour, y = toy
    assert np.array_equal(C.predict_proba(contour_model, contour).argmax(1), y)
    assert [h["stage"] for h in contour_model.history] == ["contour"] * 10


def test_history_stages(depth_model):
    assert [h["stage"] for h in depth_model.history] == ["vert"] * 5 + ["lat"] * 5 + ["head"] + ["joint"] * 5


def test_joint_stage_starts_no_worse_than_branches(depth_model):
    last = {}
    first_joint = None
    for h in depth_model.history:
        last[h["stage"]] = h["loss"]
        if h["stage"] == "joint" and first_joint is None:
            first_joint = h["loss"]
    assert first_joint <= max(last["vert"], last["lat"]) + 1e-6


def test_joint_logits_compose_branches(toy, depth_model):
    depth, _, _ = toy
    net = depth_model.build()
    lat, vert = depth.batch(np.arange(6))
    feats = np.concatenate([net.vert_features(vert), net.lat_features(lat)], axis=1)
    expect = feats @ net.head.params["W"].T + net.head.params["b"]
    assert np.abs(net.forward(lat, vert, "joint") - expect).max() <= 1e-12


def test_training_is_deterministic(toy):
    _, contour, y = toy
    sub = contour.take(np.arange(0, 40, 4))
    runs = [C.train_contour(sub, y[::4], NAMES, seed=3, schedule=C.Schedule(epochs_contour=2)) for _ in range(2)]
    assert C.encode_model(runs[0]) == C.encode_model(runs[1])


@pytest.mark.parametrize("n_classes", [2, 8, 40])
def test_initial_loss_near_log_classes(toy, n_classes):
    depth, contour, _ = toy
    labels = np.arange(len(depth)) % n_classes
    loss = nn.SoftmaxCrossEntropy()
    dnet = C.DepthNet(SMALL, n_classes, seed=1)
    cnet = C.ContourNet(C.ContourNetConfig(), n_classes, seed=1)
    for net in (dnet, cnet):
        for stage in net.STAGE_PREFIXES:
            inputs = depth if net is dnet else contour
            value = loss.forward(C.logits_for(net, inputs, stage), labels)
            assert abs(value / math.log(n_classes) - 1) <= 0.1, (type(net).__name__, stage, value)


def roll_depth(d: C.DepthInputs, k: int, l_v: int = 12) -> C.DepthInputs:
    cols = d.lat.shape[2] // l_v
    return C.DepthInputs(np.roll(d.lat, k * cols, axis=2), np.roll(d.vert, k, axis=1))


@pytest.mark.parametrize("k", [1, 5, 11])
def test_depth_logits_invariant_to_cyclic_shift(toy, depth_model, k):
    depth, _, _ = toy
    net = depth_model.build()
    sub = depth.take(np.arange(0, 40, 5))
    for stage in ("vert", "lat", "joint"):
        a = C.logits_for(net, sub, stage)
        b = C.logits_for(net, roll_depth(sub, k), stage)
        assert np.abs(a - b).max() <= 1e-12


@pytest.mark.parametrize("k", [1, 7])
def test_contour_logits_invariant_to_view_shift(toy, contour_model, k):
    _, contour, _ = toy
    net = contour_model.build()
    sub = contour.take(np.arange(0, 40, 5))
    shifted = C.ContourInputs(np.roll(sub.views, k, axis=2))
    assert np.abs(C.logits_for(net, sub) - C.logits_for(net, shifted)).max() <= 1e-12


def test_joint_loss_invariant_to_shift(toy, depth_model):
    depth, _, y = toy
    net = depth_model.build()
    loss = nn.SoftmaxCrossEntropy()
    a = loss.forward(C.logits_for(net, depth, "joint"), y)
    b = loss.forward(C.logits_for(net, roll_depth(depth, 4), "joint"), y)
    assert abs(a - b) <= 1e-12


def test_physical_rotation_of_ellipsoid(depth_model):
    net = depth_model.build()
    mesh = generate_shape("ellipsoid", None, 77)
    a = C.logits_for(net, mesh_depth_inputs(mesh))
    b = C.logits_for(net, mesh_depth_inputs(rotate_about_up(mesh, 30.0)))
    assert np.abs(a - b).max() <= 1e-3


def test_save_load_bitwise(tmp_path, toy, depth_model, contour_model):
    depth, contour, _ = toy
    for model, inputs in ((depth_model, depth), (contour_model, contour)):
        path = tmp_path / f"{model.kind}.spjm"
        C.save_model(model, path)
        back = C.load_model(path)
        assert back.class_names == NAMES and back.kind == model.kind and back.config == model.config
        p, q = C.predict_proba(model, inputs), C.predict_proba(back, inputs)
        assert p.tobytes() == q.tobytes()
        assert np.abs(p.sum(1) - 1).max() <= 1e-12


def test_decode_rejects_garbage(depth_model):
    data = C.encode_model(depth_model)
    with pytest.raises(ValueError):
        C.decode_model(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        C.decode_model(data[:-10])


def test_fuse_mean():
    assert C.fuse([0.2, 0.8], [0.6, 0.4]).tolist() == pytest.approx([0.4, 0.6])
    with pytest.raises(ValueError):
        C.fuse(np.zeros((2, 3)), np.zeros((2, 2)))


def test_evaluate_imbalanced():
    labels = np.array([0] * 90 + [1] * 10)
    rep = C.evaluate(np.zeros(100, int), labels, ["a", "b"])
    assert rep.instance_accuracy == pytest.approx(90.0) and rep.class_accuracy == pytest.approx(50.0)
    assert rep.lines()[:2] == ["instance_accuracy=90.00", "class_accuracy=50.00"]


def test_evaluate_perfect_and_zero():
    labels = np.array([0, 0, 1, 1])
    rep = C.evaluate(np.array([0, 0, 0, 0]), labels, ["a", "b"])
    assert rep.per_class == {"a": 100.0, "b": 0.0} and rep.class_accuracy == 50.0 and rep.instance_accuracy == 50.0


def test_evaluate_probabilities_and_missing_class():
    rep = C.evaluate(np.array([[0.9, 0.1, 0.0], [0.2, 0.8, 0.0]]), np.array([0, 1]), ["a", "b", "c"])
    assert rep.instance_accuracy == 100.0 and rep.missing == ["c"] and "c" not in rep.per_class
    with pytest.raises(ValueError):
        C.evaluate(np.zeros(0, int), np.zeros(0, int), ["a"])


def test_config_validation():
    with pytest.raises(ValueError):
        C.DepthNetConfig(lat_size=(120, 170))
    with pytest.raises(ValueError):
        C.ContourNetConfig(crop=30)
    with pytest.raises(ValueError):
        C.make_net("voxel", {}, 2)


def test_standardize_and_features():
    x = np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])
    z = C.standardize(x)
    assert np.allclose(z[0].mean(), 0) and np.allclose(z[0].std(), 1) and not z[1].any()
    assert C.depth_features(np.array([0.0, 2.0, 3.0]), 3.0).tolist() == [0.0, 0.0, 1.0]
