"""Triangle meshes: parsing, measurement, rotation and synthetic shape generation.

The up axis is +z throughout. Meshes are immutable; every transform returns a
new mesh.
"""

from __future__ import annotations

import hashlib
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

SHAPE_KINDS = ("box", "ellipsoid", "cylinder", "cone", "torus", "pyramid", "l_bracket", "tube")


class MeshFormatError(ValueError):
    """Raised for malformed OFF/OBJ input; carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    name: str | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64, copy=True).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if t.size and np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise ValueError("triangle with repeated vertex index")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "triangles", _readonly(t))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        t = self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))


@dataclass(frozen=True)
class ProjectionSphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "center", _readonly(np.asarray(self.center, dtype=np.float64).copy()))
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class Measurement:
    aabb: Aabb
    barycenter: np.ndarray
    sphere: ProjectionSphere
    area_fallback: bool = False


RADIUS_FACTOR = 3.0


def measure(mesh: TriangleMesh, radius_rule: str = "aabb") -> Measurement:
    """Bounding box, surface barycenter and the default projection sphere.

    The barycenter is the area-weighted mean of triangle centroids. A mesh with
    zero total area falls back to the vertex mean and sets ``area_fallback``.

    ``radius_rule="aabb"`` gives R = 3 x box diagonal. ``"upright"`` uses the
    box [-rho, rho]^2 x [zmin, zmax] around the barycenter instead, where rho is
    the largest horizontal vertex distance; that radius does not change when the
    mesh is spun about the up axis.
    """
    if mesh.n_vertices == 0 or mesh.n_triangles == 0:
        raise ValueError("cannot measure an empty mesh")
    used = mesh.vertices[np.unique(mesh.triangles)]
    box = Aabb(used.min(axis=0), used.max(axis=0))
    a, b, c = mesh.corners()
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    fallback = not total > 0
    if fallback:
        bary = used.mean(axis=0)
    else:
        bary = ((a + b + c) / 3.0 * areas[:, None]).sum(axis=0) / total
    if radius_rule == "aabb":
        diag = box.diagonal
    elif radius_rule == "upright":
        rho = np.sqrt(((used[:, :2] - bary[:2]) ** 2).sum(axis=1)).max()
        diag = math.sqrt(8.0 * rho * rho + (box.max[2] - box.min[2]) ** 2)
    else:
        raise ValueError(f"unknown radius rule {radius_rule!r}")
    if not diag > 0:
        raise ValueError("mesh has a degenerate bounding box")
    return Measurement(box, bary, ProjectionSphere(bary, RADIUS_FACTOR * diag), fallback)


def rotation_z(degrees: float) -> np.ndarray:
    r = math.radians(degrees)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate_about_up(mesh: TriangleMesh, degrees: float, center=None) -> TriangleMesh:
    """Rotate about the +z axis through ``center`` (default: the barycenter)."""
    if degrees == 0:
        return mesh
    if center is None:
        center = measure(mesh).barycenter
    center = np.asarray(center, dtype=np.float64)
    v = (mesh.vertices - center) @ rotation_z(degrees).T + center
    return TriangleMesh(v, mesh.triangles, mesh.name)


def permute_axes(mesh: TriangleMesh, order: str = "xzy") -> TriangleMesh:
    """Reorder coordinate axes, e.g. ``"xzy"`` turns a y-up model into z-up.

    Swapping two axes flips handedness, so triangle winding is reversed to keep
    outward normals outward.
    """
    idx = ["xyz".index(ch) for ch in order]
    if sorted(idx) != [0, 1, 2]:
        raise ValueError(f"bad axis order {order!r}")
    v = mesh.vertices[:, idx]
    odd = sum(1 for i in range(3) for j in range(i + 1, 3) if idx[i] > idx[j]) % 2
    t = mesh.triangles[:, ::-1] if odd else mesh.triangles
    return TriangleMesh(v, t, mesh.name)


# --- OFF / OBJ ---------------------------------------------------------------


def _tokens(text: str) -> Iterable[tuple[int, list[str]]]:
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _fan(poly: list[int]) -> list[tuple[int, int, int]]:
    tris = []
    for k in range(1, len(poly) - 1):
        tri = (poly[0], poly[k], poly[k + 1])
        if len(set(tri)) == 3:
            tris.append(tri)
    return tris


def _finite(tok: list[str], lineno: int) -> list[float]:
    try:
        xyz = [float(x) for x in tok[:3]]
    except ValueError:
        raise MeshFormatError("bad vertex coordinate", lineno) from None
    if not all(math.isfinite(x) for x in xyz):
        raise MeshFormatError("non-finite vertex coordinate", lineno)
    return xyz


def parse_off(text: str, name: str | None = None) -> TriangleMesh:
    lines = _tokens(text)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise MeshFormatError("empty file", 1) from None
    # Some ModelNet files glue the counts onto the header ("OFF490 518 0").
    first = head[0]
    if not first.startswith("OFF"):
        raise MeshFormatError(f"expected OFF header, got {first!r}", lineno)
    rest = ([first[3:]] if len(first) > 3 else []) + head[1:]
    if not rest:
        try:
            lineno, rest = next(lines)
        except StopIteration:
            raise MeshFormatError("missing counts line", lineno) from None
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError):
        raise MeshFormatError("bad counts line", lineno) from None
    if nv < 0 or nf < 0:
        raise MeshFormatError("negative counts", lineno)

    verts = []
    for _ in range(nv):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshFormatError(f"expected {nv} vertices, found {len(verts)}", lineno) from None
        if len(tok) < 3:
            raise MeshFormatError("vertex line needs 3 coordinates", lineno)
        verts.append(_finite(tok, lineno))

    tris = []
    for k in range(nf):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise MeshFormatError(f"expected {nf} faces, found {k}", lineno) from None
        try:
            cnt = int(tok[0])
            poly = [int(x) for x in tok[1 : 1 + cnt]]
        except ValueError:
            raise MeshFormatError("bad face line", lineno) from None
        if cnt < 3 or len(poly) != cnt:
            raise MeshFormatError("face vertex count mismatch", lineno)
        for i in poly:
            if i < 0 or i >= nv:
                raise MeshFormatError(f"face index {i} out of range (0..{nv - 1})", lineno)
        tris.extend(_fan(poly))

    extra = next(lines, None)
    if extra is not None:
        raise MeshFormatError("trailing data after faces", extra[0])
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(tris, dtype=np.int64).reshape(-1, 3), name)


def serialize_off(mesh: TriangleMesh) -> str:
    out = io.StringIO()
    out.write(f"OFF\n{mesh.n_vertices} {mesh.n_triangles} 0\n")
    for x, y, z in mesh.vertices:
        out.write("%.9g %.9g %.9g\n" % (x, y, z))
    for i, j, k in mesh.triangles:
        out.write(f"3 {i} {j} {k}\n")
    return out.getvalue()


def parse_obj(text: str, name: str | None = None) -> TriangleMesh:
    verts: list[list[float]] = []
    tris = []
    for lineno, tok in _tokens(text):
        if tok[0] == "v":
            if len(tok) < 4:
                raise MeshFormatError("vertex line needs 3 coordinates", lineno)
            verts.append(_finite(tok[1:], lineno))
        elif tok[0] == "f":
            poly = []
            for ref in tok[1:]:
                try:
                    i = int(ref.split("/")[0])
                except ValueError:
                    raise MeshFormatError(f"bad face reference {ref!r}", lineno) from None
                i = i - 1 if i > 0 else len(verts) + i
                if i < 0 or i >= len(verts):
                    raise MeshFormatError(f"face index {ref} out of range", lineno)
                poly.append(i)
            if len(poly) < 3:
                raise MeshFormatError("face needs at least 3 vertices", lineno)
            tris.extend(_fan(poly))
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(tris, dtype=np.int64).reshape(-1, 3), name)


def load_mesh(path: str | Path) -> TriangleMesh:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".obj":
        return parse_obj(text, name=path.stem)
    return parse_off(text, name=path.stem)


def save_off(mesh: TriangleMesh, path: str | Path) -> None:
    Path(path).write_text(serialize_off(mesh))


# --- synthetic shapes --------------------------------------------------------


@dataclass(frozen=True)
class ParamRange:
    lo: float
    hi: float
    integer: bool = False
    default: float | None = None
    # narrower interval that seeded sampling draws from
    sample: tuple[float, float] | None = None


SHAPE_PARAMS: dict[str, dict[str, ParamRange]] = {
    "box": {
        "sx": ParamRange(0.05, 10, sample=(0.6, 1.6)),
        "sy": ParamRange(0.05, 10, sample=(0.6, 1.6)),
        "sz": ParamRange(0.05, 10, sample=(0.6, 1.6)),
        "subdiv": ParamRange(1, 64, True, 6),
    },
    "ellipsoid": {
        "rx": ParamRange(0.05, 10, sample=(0.6, 1.2)),
        "ry": ParamRange(0.05, 10, sample=(0.6, 1.2)),
        "rz": ParamRange(0.05, 10, sample=(0.6, 1.2)),
        "subdiv": ParamRange(0, 7, True, 3),
    },
    "cylinder": {
        "radius": ParamRange(0.05, 10, sample=(0.4, 0.8)),
        "height": ParamRange(0.05, 20, sample=(0.9, 2.2)),
        "segments": ParamRange(3, 1024, True, 32),
        "rings": ParamRange(1, 256, True, 6),
    },
    "cone": {
        "radius": ParamRange(0.05, 10, sample=(0.5, 0.9)),
        "height": ParamRange(0.05, 20, sample=(0.9, 2.0)),
        "segments": ParamRange(3, 1024, True, 32),
        "rings": ParamRange(1, 256, True, 6),
    },
    "torus": {
        "major": ParamRange(0.05, 10, sample=(0.8, 1.2)),
        "minor": ParamRange(0.01, 10, sample=(0.2, 0.4)),
        "u_segments": ParamRange(3, 1024, True, 48),
        "v_segments": ParamRange(3, 1024, True, 16),
    },
    "pyramid": {
        "sx": ParamRange(0.05, 10, sample=(0.9, 1.6)),
        "sy": ParamRange(0.05, 10, sample=(0.9, 1.6)),
        "height": ParamRange(0.05, 20, sample=(0.8, 1.6)),
        "rings": ParamRange(1, 256, True, 8),
    },
    "l_bracket": {
        "length": ParamRange(0.1, 10, sample=(1.2, 2.0)),
        "width": ParamRange(0.05, 10, sample=(0.6, 1.2)),
        "height": ParamRange(0.1, 10, sample=(1.0, 1.8)),
        "thickness": ParamRange(0.01, 5, sample=(0.2, 0.4)),
        "subdiv": ParamRange(1, 64, True, 4),
    },
    "tube": {
        "outer": ParamRange(0.05, 10, sample=(0.5, 0.9)),
        "inner_ratio": ParamRange(0.05, 0.98, sample=(0.55, 0.8)),
        "height": ParamRange(0.05, 20, sample=(0.8, 1.6)),
        "segments": ParamRange(3, 1024, True, 32),
        "rings": ParamRange(1, 256, True, 4),
    },
}


def resolve_params(kind: str, params: dict | None, seed: int) -> dict:
    """Validate ``params`` and fill missing ones.

    Missing float parameters are drawn from the sampling interval with a
    generator seeded by ``seed``; missing integer parameters take defaults.
    Draw order is fixed by the parameter table, so results are reproducible.
    """
    if kind not in SHAPE_PARAMS:
        raise ValueError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    spec = SHAPE_PARAMS[kind]
    params = dict(params or {})
    unknown = set(params) - set(spec)
    if unknown:
        raise ValueError(f"unknown {kind} parameter(s): {sorted(unknown)}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    out = {}
    for name, pr in spec.items():
        draw = None
        if not pr.integer:
            lo, hi = pr.sample or (pr.lo, pr.hi)
            draw = float(rng.uniform(lo, hi))
        if name in params:
            val = params[name]
        elif pr.integer:
            val = pr.default
        else:
            val = draw
        if pr.integer:
            if float(val) != int(val):
                raise ValueError(f"{kind}.{name} must be an integer, got {val}")
            val = int(val)
        else:
            val = float(val)
        if not (pr.lo <= val <= pr.hi):
            raise ValueError(f"{kind}.{name}={val} outside [{pr.lo}, {pr.hi}]")
        out[name] = val
    if kind == "torus" and not out["minor"] < out["major"]:
        raise ValueError("torus minor radius must be below the major radius")
    if kind == "l_bracket" and not (out["thickness"] < out["length"] and out["thickness"] < out["height"]):
        raise ValueError("l_bracket thickness must be below length and height")
    return out


def generate_shape(kind: str, params: dict | None = None, seed: int = 0) -> TriangleMesh:
    p = resolve_params(kind, params, seed)
    v, t = _BUILDERS[kind](p)
    return TriangleMesh(v, t, name=kind)


def _dedup(v: np.ndarray, t: np.ndarray, key: np.ndarray | None = None):
    """Merge vertices with identical ``key`` rows (default: the coordinates)."""
    key = v if key is None else key
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return v[first[order]], remap[inverse.reshape(-1)][t]


def _grid_tris(rows: int, cols: int, offset: int = 0, wrap: bool = False) -> np.ndarray:
    """Quads of a (rows+1) x cols(+1) vertex grid split into triangles.

    With ``wrap`` the column index is periodic (cols vertices per row).
    """
    w = cols if wrap else cols + 1
    i, j = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    i, j = i.ravel(), j.ravel()
    j1 = (j + 1) % cols if wrap else j + 1
    a = i * w + j
    b = i * w + j1
    c = (i + 1) * w + j1
    d = (i + 1) * w + j
    return offset + np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def _box(p):
    n = p["subdiv"]
    tris, keys = [], []
    base = 0
    # (origin, u, v) on the integer lattice [0, n]^3 with u x v pointing outward
    faces = [
        ((0, 0, 0), (0, 1, 0), (1, 0, 0)),  # z = 0
        ((0, 0, n), (1, 0, 0), (0, 1, 0)),  # z = n
        ((0, 0, 0), (1, 0, 0), (0, 0, 1)),  # y = 0
        ((0, n, 0), (0, 0, 1), (1, 0, 0)),  # y = n
        ((0, 0, 0), (0, 0, 1), (0, 1, 0)),  # x = 0
        ((n, 0, 0), (0, 1, 0), (0, 0, 1)),  # x = n
    ]
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    for o, u, w in faces:
        o, u, w = (np.array(x) for x in (o, u, w))
        lat = o + ii.ravel()[:, None] * w + jj.ravel()[:, None] * u
        keys.append(lat)
        tris.append(_grid_tris(n, n, base))
        base += len(lat)
    key = np.concatenate(keys)
    v = (key / n - 0.5) * np.array([p["sx"], p["sy"], p["sz"]])
    return _dedup(v, np.concatenate(tris), key)


_ICO_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def icosphere(subdiv: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere: 20 * 4**subdiv outward-facing triangles."""
    if subdiv in _ICO_CACHE:
        v, t = _ICO_CACHE[subdiv]
        return v.copy(), t.copy()
    g = (1 + 5 ** 0.5) / 2
    v = np.array([
        [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
        [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
        [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
    ], dtype=np.float64)
    t = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdiv):
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges.sort(axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mid = v[uniq[:, 0]] + v[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = len(t)
        ab, bc, ca = (len(v) + inv[k * m:(k + 1) * m] for k in range(3))
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        t = np.concatenate([
            np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1),
        ])
        v = np.concatenate([v, mid])
    _ICO_CACHE[subdiv] = (v.copy(), t.copy())
    return v, t


def _ellipsoid(p):
    v, t = icosphere(p["subdiv"])
    return v * np.array([p["rx"], p["ry"], p["rz"]]), t


def _ring(r, z, segments, phase=0.0):
    a = phase + 2 * np.pi * np.arange(segments) / segments
    return np.stack([r * np.cos(a), r * np.sin(a), np.full(segments, z)], 1)


def _cap(ring_start: int, segments: int, center: int, up: bool) -> np.ndarray:
    j = np.arange(segments)
    a = ring_start + j
    b = ring_start + (j + 1) % segments
    c = np.full(segments, center)
    return np.stack([c, a, b], 1) if up else np.stack([c, b, a], 1)


def _cylinder(p):
    s, k = p["segments"], p["rings"]
    r, h = p["radius"], p["height"]
    side = np.concatenate([_ring(r, -h / 2 + h * i / k, s) for i in range(k + 1)])
    v = np.concatenate([side, [[0, 0, -h / 2], [0, 0, h / 2]]])
    nb = len(side)
    t = np.concatenate([
        _grid_tris(k, s, wrap=True),
        _cap(0, s, nb, up=False),
        _cap(k * s, s, nb + 1, up=True),
    ])
    return v, t


def _cone_parts(radius, height, segments, rings, phase=0.0):
    rows = [_ring(radius * (1 - i / rings), -height / 2 + height * i / rings, segments, phase)
            for i in range(rings)]
    side = np.concatenate(rows)
    apex = len(side)
    base_c = apex + 1
    v = np.concatenate([side, [[0, 0, height / 2], [0, 0, -height / 2]]])
    t = [_cap(0, segments, base_c, up=False)]
    if rings > 1:
        t.append(_grid_tris(rings - 1, segments, wrap=True))
    t.append(_cap((rings - 1) * segments, segments, apex, up=True))
    return v, np.concatenate(t)


def _cone(p):
    return _cone_parts(p["radius"], p["height"], p["segments"], p["rings"])


def _pyramid(p):
    v, t = _cone_parts(1.0, p["height"], 4, p["rings"], phase=np.pi / 4)
    scale = np.array([p["sx"] / 2 ** 0.5, p["sy"] / 2 ** 0.5, 1.0])
    return v * scale, t


def _torus(p):
    nu, nv = p["u_segments"], p["v_segments"]
    R, r = p["major"], p["minor"]
    u = 2 * np.pi * np.arange(nu) / nu
    w = 2 * np.pi * np.arange(nv) / nv
    uu, ww = np.meshgrid(u, w, indexing="ij")
    rho = R + r * np.cos(ww)
    v = np.stack([rho * np.cos(uu), rho * np.sin(uu), r * np.sin(ww)], -1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    i, j = i.ravel(), j.ravel()
    i1, j1 = (i + 1) % nu, (j + 1) % nv
    a, b, c, d = i * nv + j, i1 * nv + j, i1 * nv + j1, i * nv + j1
    t = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return v, t


def _tube(p):
    s, k = p["segments"], p["rings"]
    ro, h = p["outer"], p["height"]
    ri = ro * p["inner_ratio"]
    outer = np.concatenate([_ring(ro, -h / 2 + h * i / k, s) for i in range(k + 1)])
    inner = np.concatenate([_ring(ri, -h / 2 + h * i / k, s) for i in range(k + 1)])
    n = len(outer)
    v = np.concatenate([outer, inner])
    t_out = _grid_tris(k, s, wrap=True)
    t_in = _grid_tris(k, s, n, wrap=True)[:, ::-1]
    j = np.arange(s)
    j1 = (j + 1) % s
    top_o, top_i = k * s + j, n + k * s + j
    top = np.concatenate([
        np.stack([top_o, k * s + j1, n + k * s + j1], 1),
        np.stack([top_o, n + k * s + j1, top_i], 1),
    ])
    bot_o, bot_i = j, n + j
    bot = np.concatenate([
        np.stack([bot_o, n + j1, j1], 1),
        np.stack([bot_o, bot_i, n + j1], 1),
    ])
    return v, np.concatenate([t_out, t_in, top, bot])


def _l_bracket(p):
    L, W, H, T, n = p["length"], p["width"], p["height"], p["thickness"], p["subdiv"]
    base_v, base_t = _box({"sx": L, "sy": W, "sz": T, "subdiv": n})
    wall_v, wall_t = _box({"sx": T, "sy": W, "sz": H, "subdiv": n})
    base_v = base_v + np.array([L / 2 - T / 2, 0.0, T / 2 - H / 2])
    # the wall stands at the x = 0 end and overlaps the base plate's corner
    v = np.concatenate([base_v, wall_v])
    t = np.concatenate([base_t, wall_t + len(base_v)])
    return v, t


_BUILDERS = {
    "box": _box,
    "ellipsoid": _ellipsoid,
    "cylinder": _cylinder,
    "cone": _cone,
    "torus": _torus,
    "pyramid": _pyramid,
    "l_bracket": _l_bracket,
    "tube": _tube,
}


def edge_use_counts(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """Counts of undirected and directed edge uses, for watertightness checks."""
    t = mesh.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    _, ucounts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
    return ucounts, dcounts


def is_watertight(mesh: TriangleMesh) -> bool:
    ucounts, dcounts = edge_use_counts(mesh)
    return bool(np.all(ucounts == 2) and np.all(dcounts == 1))
