"""Quick oracle checks run by ``sphereproj selftest``.

Each check returns (name, passed, detail). The test suite runs the same
properties at full size; these are the fast versions for a fresh install.
"""

from __future__ import annotations

import time

import numpy as np

from . import neural as nn
from .contour import project_contour
from .depth import GridConfig, project_depth, vertical_strips
from .mesh import SHAPE_KINDS, generate_shape, measure, rotate_about_up
from .octree import build, first_hits, scan_hits


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1e-300)
    return float(np.abs(a - b).max(initial=0.0)) / scale


def gradcheck(layer: nn.Layer, x: np.ndarray, rng, step: float = 1e-5) -> float:
    """Worst relative error of analytic vs central-difference gradients of
    the scalar sum(U * layer(x)) with respect to the input and every parameter."""
    out = layer.forward(x)
    u = rng.standard_normal(out.shape)
    dx = layer.backward(u)
    analytic = {"x": dx} | {k: v.copy() for k, v in layer.grads.items()}

    def f():
        return float((layer.forward(x) * u).sum())

    worst = 0.0
    targets = {"x": x} | layer.params
    for name, arr in targets.items():
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
        if isinstance(layer, nn.CyclicFC) and layer.freeze_cross and name != "x":
            num[1:] = 0.0
        worst = max(worst, _rel_err(analytic[name], num))
    return worst


def kink_free(rng, shape, gap: float = 1e-2) -> np.ndarray:
    """Random values kept away from 0 and from each other, so ReLU and max
    pool stay differentiable under the finite-difference step."""
    n = int(np.prod(shape))
    vals = (np.arange(n) - n / 2 + 0.5) * gap * 10
    vals = np.where(np.abs(vals) < gap, gap, vals)
    return rng.permutation(vals).reshape(shape)


def layer_cases(rng):
    """(layer, input) pairs covering every layer kind."""
    pads = [("zero", "zero"), ("zero", "circular"), ("circular", "circular")]
    cases = []
    p = pads[rng.integers(3)]
    k = int(rng.choice([1, 3, 5]))
    cases.append((nn.Conv2d(2, 3, k, p, int(rng.integers(1, 3)), rng), rng.standard_normal((2, 2, 6, 7))))
    cases.append((nn.ReLU(), kink_free(rng, (2, 3, 4))))
    cases.append((nn.MaxPool2d(2, int(rng.integers(1, 4))), kink_free(rng, (2, 2, 5, 7))))
    cases.append((nn.Dense(5, 4, rng), rng.standard_normal((3, 5))))
    act = ["relu", "identity"][rng.integers(2)]
    cyc = nn.CyclicFC(4, 3, 5, act, rng, cross_init="glorot")
    cyc.params["b"][...] = rng.standard_normal(cyc.params["b"].shape) * 0.1
    cases.append((cyc, rng.standard_normal((2, 4, 3))))
    cases.append((nn.PositionMean(), rng.standard_normal((2, 4, 3))))
    cases.append((nn.FoldPositions(), rng.standard_normal((2, 3, 1, 2, 2))))
    cases.append((nn.UnfoldPositions(3), rng.standard_normal((6, 2, 2, 2))))
    cases.append((nn.SplitColumns(3), rng.standard_normal((2, 2, 2, 6))))
    cases.append((nn.Flatten(), rng.standard_normal((2, 3, 2))))
    return cases


class _XentLayer(nn.Layer):
    """Softmax cross-entropy viewed as a layer so gradcheck can drive it."""

    kind = "softmax_xent"

    def __init__(self, labels):
        super().__init__()
        self.labels = labels
        self.loss = nn.SoftmaxCrossEntropy()

    def forward(self, x):
        return np.array([self.loss.forward(x, self.labels)])

    def backward(self, g):
        return self.loss.backward() * g[0]


def check_gradients(instances: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(instances):
        cases = layer_cases(rng) + [(_XentLayer(rng.integers(0, 4, 3)), rng.standard_normal((3, 4)))]
        for layer, x in cases:
            worst[layer.kind] = max(worst.get(layer.kind, 0.0), gradcheck(layer, x, rng))
    bad = {k: v for k, v in worst.items() if v > 1e-6}
    return "gradients", not bad, ", ".join(f"{k}={v:.1e}" for k, v in sorted(worst.items()))


def check_octree(meshes: int = 4, rays: int = 2000, seed: int = 0):
    rng = np.random.default_rng(seed)
    mismatches = 0
    for i in range(meshes):
        mesh = generate_shape(SHAPE_KINDS[i % len(SHAPE_KINDS)], None, seed + i)
        sphere = measure(mesh).sphere
        o = sphere.center + rng.uniform(-1, 1, (rays, 3)) * sphere.radius / 2
        d = rng.standard_normal((rays, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        a = first_hits(build(mesh), o, d, 2 * sphere.radius)
        b = scan_hits(mesh, o, d, 2 * sphere.radius)
        same = (np.isnan(a) == np.isnan(b)) & (np.isnan(a) | (np.abs(a - b) <= 1e-9 * np.abs(b)))
        mismatches += int((~same).sum())
    return "octree", mismatches == 0, f"{mismatches} mismatches over {meshes * rays} rays"


def check_equivariance(seed: int = 0):
    mesh = generate_shape("l_bracket", None, seed)
    sphere = measure(mesh).sphere
    rot = rotate_about_up(mesh, 30.0)
    g = GridConfig()
    a = project_depth(mesh, g, sphere)
    b = project_depth(rot, g, sphere)
    frac = float(np.mean(np.abs(np.roll(a.values, 15, axis=1) - b.values) <= 1e-6 * sphere.radius))
    va, vb = vertical_strips(a), vertical_strips(b)
    vfrac = float(np.mean([np.mean(np.abs(va[k].values - vb[(k + 1) % 12].values) <= 1e-6 * sphere.radius)
                           for k in range(12)]))
    ma = project_contour(mesh, 12, 64, sphere).views.astype(int)
    mb = project_contour(rot, 12, 64, sphere).views.astype(int)
    mfrac = float(np.mean(np.abs(np.roll(ma, 1, axis=1) - mb) <= 2))
    ok = frac >= 0.99 and vfrac >= 0.99 and mfrac >= 0.95
    return "equivariance", ok, f"depth {frac:.4f} strips {vfrac:.4f} montage {mfrac:.4f}"


def run_all(log=print) -> bool:
    ok = True
    for check in (check_octree, check_gradients, check_equivariance):
        t = time.perf_counter()
        name, passed, detail = check()
        ok &= passed
        log(f"{'PASS' if passed else 'FAIL'} {name} ({time.perf_counter() - t:.1f}s): {detail}")
    return ok
