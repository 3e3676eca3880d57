"""Dataset manifests, the synthetic desk dataset, and the projection cache.

A manifest lists (split, label, source) entries in a canonical text form.
Materialisation computes every projection once and stores it under the mesh
content hash plus a digest of the projection settings that produced it.
"""

from __future__ import annotations

import hashlib
import logging
import time
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import depth as dp
from .classifier import ContourInputs, DepthInputs, depth_features
from .contour import project_contour
from .formats import atomic_write, read_sphc, read_sphd, write_sphc, write_sphd
from .mesh import (SHAPE_KINDS, MeshFormatError, TriangleMesh, generate_shape, load_mesh, measure, permute_axes,
                   rotate_about_up)
from .octree import build as build_octree

log = logging.getLogger(__name__)

SPLITS = ("train", "test")
MESH_SUFFIXES = (".off", ".obj")


@dataclass(frozen=True)
class ProjectionConfig:
    grid: dp.GridConfig = dp.GridConfig()
    lat: dp.LatStripConfig = dp.LatStripConfig()
    vert: dp.VertStripConfig = dp.VertStripConfig()
    strip_downsample: int = 2  # block mean applied to stored strips
    views_per_ring: int = 12
    view_size: int = 64
    radius_rule: str = "aabb"
    silhouette: bool = False
    up: str = "z"  # "y" permutes y-up source files to z-up on load

    def depth_text(self) -> str:
        g, la, v = self.grid, self.lat, self.vert
        return (f"grid={g.m}x{g.n} lat={la.m_h}x{la.n_h}@{la.band[0]!r},{la.band[1]!r} "
                f"vert={v.n_v}x{v.m_v}x{v.l_v}@{v.half_width!r} down={self.strip_downsample} "
                f"radius={self.radius_rule}")

    def contour_text(self) -> str:
        return f"views={self.views_per_ring} size={self.view_size} silhouette={int(self.silhouette)} radius={self.radius_rule}"

    def depth_digest(self) -> str:
        return hashlib.sha256(self.depth_text().encode()).hexdigest()[:16]

    def contour_digest(self) -> str:
        return hashlib.sha256(self.contour_text().encode()).hexdigest()[:16]


# --- manifests -----------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Entry:
    split: str
    label: str
    source: str  # "gen:<kind>" or a mesh file path
    seed: int = 0
    rotation: float = 0.0

    def key(self) -> str:
        return f"{self.split} {self.label} {self.source} {self.seed} {self.rotation!r}"

    def load(self, up: str = "z") -> TriangleMesh:
        if self.source.startswith("gen:"):
            mesh = generate_shape(self.source[4:], None, self.seed)
        else:
            mesh = load_upright(self.source, up)
        if self.rotation:
            mesh = rotate_about_up(mesh, self.rotation)
        return mesh


@dataclass(frozen=True)
class Manifest:
    classes: tuple[str, ...]
    entries: tuple[Entry, ...]
    cache_dir: str = ""
    digests: tuple[tuple[str, str], ...] = ()  # (name, projection settings digest)

    def __post_init__(self):
        known = set(self.classes)
        for e in self.entries:
            if e.split not in SPLITS:
                raise ValueError(f"unknown split {e.split!r}")
            if e.label not in known:
                raise ValueError(f"entry label {e.label!r} not among the classes")
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))
        object.__setattr__(self, "digests", tuple(sorted(self.digests)))

    def with_projection(self, cfg: ProjectionConfig, cache_dir) -> "Manifest":
        d = (("contour", cfg.contour_digest()), ("depth", cfg.depth_digest()))
        return replace(self, cache_dir=str(cache_dir), digests=d)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def split(self, name: str) -> list[Entry]:
        return [e for e in self.entries if e.split == name]

    def labels(self, name: str) -> np.ndarray:
        idx = {c: i for i, c in enumerate(self.classes)}
        return np.array([idx[e.label] for e in self.split(name)], dtype=np.int64)

    def counts(self) -> dict[tuple[str, str], int]:
        return dict(Counter((e.split, e.label) for e in self.entries))

    def to_text(self) -> str:
        lines = ["# sphereproj manifest v1", "classes=" + ",".join(self.classes)]
        if self.cache_dir:
            lines.append(f"cache_dir={self.cache_dir}")
        lines += [f"digest.{k}={v}" for k, v in self.digests]
        for e in self.entries:
            lines.append(f"entry split={e.split} label={e.label} source={e.source} seed={e.seed} rotation={e.rotation!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Manifest":
        classes = None
        entries, cache_dir, digests = [], "", []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("classes="):
                classes = tuple(c for c in line[8:].split(",") if c)
                continue
            if line.startswith("cache_dir="):
                cache_dir = line[10:]
                continue
            if line.startswith("digest."):
                k, _, v = line[7:].partition("=")
                digests.append((k, v))
                continue
            if not line.startswith("entry "):
                raise ValueError(f"line {lineno}: unrecognised manifest line")
            kv = dict(tok.split("=", 1) for tok in line[6:].split(" "))
            try:
                entries.append(Entry(kv["split"], kv["label"], kv["source"], int(kv.get("seed", 0)),
                                     float(kv.get("rotation", 0.0))))
            except KeyError as exc:
                raise ValueError(f"line {lineno}: missing field {exc}") from None
        if classes is None:
            raise ValueError("manifest has no classes line")
        return cls(classes, tuple(entries), cache_dir, tuple(digests))

    def save(self, path) -> None:
        atomic_write(path, self.to_text().encode())

    @classmethod
    def load(cls, path) -> "Manifest":
        return cls.from_text(Path(path).read_text())


def load_upright(path, up: str = "z") -> TriangleMesh:
    """Load a mesh file, permuting a y-up source into the z-up convention."""
    if up not in ("z", "y"):
        raise ValueError(f"up axis must be 'z' or 'y', got {up!r}")
    mesh = load_mesh(path)
    return permute_axes(mesh, "xzy") if up == "y" else mesh


def _entry_seed(seed: int, ci: int, si: int, i: int) -> tuple[int, float]:
    # one independent stream per (class, split, index): no sample can repeat across splits
    st = np.random.SeedSequence([seed, ci, si, i]).generate_state(3, np.uint32)
    return (int(st[0]) << 32) | int(st[1]), float(st[2]) / 2**32 * 360.0


def synthetic_manifest(n_train: int = 200, n_test: int = 50, seed: int = 0,
                       classes=SHAPE_KINDS, random_rotation: bool = True) -> Manifest:
    """Procedural dataset: one class per generator kind, each sample a random
    parameter draw turned by a random azimuth."""
    entries = []
    for ci, kind in enumerate(classes):
        for si, (split, count) in enumerate(zip(SPLITS, (n_train, n_test))):
            for i in range(count):
                s, rot = _entry_seed(seed, ci, si, i)
                entries.append(Entry(split, kind, f"gen:{kind}", s, rot if random_rotation else 0.0))
    return Manifest(tuple(classes), tuple(entries))


def ingest(root) -> tuple[Manifest, int]:
    """Manifest for ``root/<class>/<split>/*.off|*.obj``; files that fail to
    parse are skipped and counted."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(root)
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    entries, failed = [], 0
    for c in classes:
        before = len(entries)
        for split in SPLITS:
            d = root / c / split
            if not d.is_dir():
                continue
            for f in sorted(d.iterdir()):
                if f.suffix.lower() not in MESH_SUFFIXES:
                    continue
                try:
                    load_mesh(f)
                except (MeshFormatError, ValueError, OSError) as exc:
                    log.warning("skipping %s: %s", f, exc)
                    failed += 1
                    continue
                entries.append(Entry(split, c, str(f.resolve())))
        if len(entries) == before:
            raise ValueError(f"class {c!r} has no readable meshes")
    return Manifest(tuple(classes), tuple(entries)), failed


# --- materialisation ------------------------------------------------------------


@dataclass
class MaterializeSummary:
    computed: int = 0
    cached: int = 0
    failed: int = 0
    seconds: dict[str, float] = field(default_factory=lambda: defaultdict(float))
    failures: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        n = max(self.computed, 1)
        out = [f"computed={self.computed}", f"cached={self.cached}", f"failed={self.failed}"]
        out += [f"seconds.{k}={v:.3f}" for k, v in sorted(self.seconds.items())]
        out += [f"mean_seconds.{k}={v / n:.4f}" for k, v in sorted(self.seconds.items())]
        return out


class ProjectionCache:
    """Per-mesh directory ``<root>/<hash[:2]>/<hash>/`` holding
    ``depth-<d>.sphd``, ``lat-<d>.sphd``, ``vert-<d>.sphd`` and
    ``montage-<c>.sphc``, where d and c are the settings digests. The entry
    index ``index.txt`` maps manifest entries to mesh hashes."""

    def __init__(self, root, cfg: ProjectionConfig = ProjectionConfig()):
        self.root = Path(root)
        self.cfg = cfg
        self._index: dict[str, str] | None = None

    @property
    def index_path(self) -> Path:
        return self.root / "index.txt"

    def index(self) -> dict[str, str]:
        if self._index is None:
            self._index = {}
            if self.index_path.exists():
                for line in self.index_path.read_text().splitlines():
                    h, _, key = line.partition(" ")
                    self._index[key] = h
        return self._index

    def _save_index(self):
        text = "".join(f"{h} {k}\n" for k, h in sorted(self.index().items()))
        atomic_write(self.index_path, text.encode())

    def mesh_dir(self, mesh_hash: str) -> Path:
        return self.root / mesh_hash[:2] / mesh_hash

    def depth_paths(self, mesh_hash: str) -> dict[str, Path]:
        d, dg = self.mesh_dir(mesh_hash), self.cfg.depth_digest()
        return {k: d / f"{k}-{dg}.sphd" for k in ("depth", "lat", "vert")}

    def montage_path(self, mesh_hash: str) -> Path:
        return self.mesh_dir(mesh_hash) / f"montage-{self.cfg.contour_digest()}.sphc"

    def compute(self, mesh: TriangleMesh, mesh_hash: str, want_depth=True, want_contour=True, timing=None):
        """Compute and store whatever is missing; returns True if anything was computed."""
        timing = timing if timing is not None else defaultdict(float)
        cfg = self.cfg
        did = False
        dpaths = self.depth_paths(mesh_hash)
        sphere = None
        if want_depth and not all(p.exists() for p in dpaths.values()):
            t = time.perf_counter()
            sphere = measure(mesh, cfg.radius_rule).sphere
            tree = build_octree(mesh)
            timing["octree"] += time.perf_counter() - t
            t = time.perf_counter()
            dmap = dp.project_depth(mesh, cfg.grid, sphere, tree)
            timing["depth"] += time.perf_counter() - t
            t = time.perf_counter()
            f = cfg.strip_downsample
            lat = dp.mean_pool(dp.latitude_strip(dmap, cfg.lat).values, f)
            vert = np.concatenate([dp.mean_pool(s.values, f) for s in dp.vertical_strips(dmap, cfg.vert)])
            timing["strips"] += time.perf_counter() - t
            t = time.perf_counter()
            r = sphere.radius
            write_sphd(dpaths["depth"], dmap.values, r)
            write_sphd(dpaths["lat"], lat, r)
            write_sphd(dpaths["vert"], vert, r)
            timing["write"] += time.perf_counter() - t
            did = True
        mpath = self.montage_path(mesh_hash)
        if want_contour and not mpath.exists():
            t = time.perf_counter()
            if sphere is None:
                sphere = measure(mesh, cfg.radius_rule).sphere
            mv = project_contour(mesh, cfg.views_per_ring, cfg.view_size, sphere, cfg.silhouette)
            timing["contour"] += time.perf_counter() - t
            t = time.perf_counter()
            flat = mv.views.reshape(-1, cfg.view_size, cfg.view_size)
            write_sphc(mpath, flat.astype(np.float32) / np.float32(255.0))
            timing["write"] += time.perf_counter() - t
            did = True
        return did

    def materialize(self, manifest: Manifest, depth=True, contour=True, progress=None) -> MaterializeSummary:
        summary = MaterializeSummary()
        index = self.index()
        for i, e in enumerate(manifest.entries):
            key = e.key()
            try:
                t = time.perf_counter()
                h = index.get(key)
                mesh = None
                if h is None or not self._complete(h, depth, contour):
                    mesh = e.load(self.cfg.up)
                    h = mesh.content_hash()
                summary.seconds["load"] += time.perf_counter() - t
                if mesh is not None and self.compute(mesh, h, depth, contour, summary.seconds):
                    summary.computed += 1
                else:
                    summary.cached += 1
                index[key] = h
            except (MeshFormatError, ValueError, OSError) as exc:
                log.warning("failed %s: %s", key, exc)
                summary.failed += 1
                summary.failures.append(key)
            if progress and (i + 1) % 100 == 0:
                progress(i + 1, len(manifest.entries))
        self._save_index()
        atomic_write(self.root / "materialize_summary.txt", ("\n".join(summary.lines()) + "\n").encode())
        return summary

    def _complete(self, h: str, depth: bool, contour: bool) -> bool:
        ok = True
        if depth:
            ok &= all(p.exists() for p in self.depth_paths(h).values())
        if contour:
            ok &= self.montage_path(h).exists()
        return ok

    def _hashes(self, manifest: Manifest, split: str) -> list[str]:
        index = self.index()
        out = []
        for e in manifest.split(split):
            if e.key() not in index:
                raise KeyError(f"entry not materialised: {e.key()}")
            out.append(index[e.key()])
        return out

    def depth_inputs(self, manifest: Manifest, split: str) -> DepthInputs:
        hashes = self._hashes(manifest, split)
        cfg = self.cfg
        lat_list, vert_list = [], []
        for h in hashes:
            p = self.depth_paths(h)
            lat, r = read_sphd(p["lat"])
            vert, _ = read_sphd(p["vert"])
            lat_list.append(depth_features(lat, r).astype(np.float32))
            vert_list.append(depth_features(vert, r).reshape(cfg.vert.l_v, -1, vert.shape[1]).astype(np.float32))
        if not hashes:
            return DepthInputs(np.zeros((0, 1, 1), np.float32), np.zeros((0, 1, 1, 1), np.float32))
        return DepthInputs(np.stack(lat_list), np.stack(vert_list))

    def contour_inputs(self, manifest: Manifest, split: str) -> ContourInputs:
        cfg = self.cfg
        views = []
        for h in self._hashes(manifest, split):
            v = read_sphc(self.montage_path(h))
            g = np.rint(v * 255.0).astype(np.uint8)
            views.append(g.reshape(3, cfg.views_per_ring, cfg.view_size, cfg.view_size))
        if not views:
            return ContourInputs(np.zeros((0, 3, cfg.views_per_ring, cfg.view_size, cfg.view_size), np.uint8))
        return ContourInputs(np.stack(views))


def mesh_depth_inputs(mesh: TriangleMesh, cfg: ProjectionConfig = ProjectionConfig()) -> DepthInputs:
    """Network inputs for a single mesh, computed exactly as the cache does."""
    sphere = measure(mesh, cfg.radius_rule).sphere
    dmap = dp.project_depth(mesh, cfg.grid, sphere)
    f = cfg.strip_downsample
    lat = dp.mean_pool(dp.latitude_strip(dmap, cfg.lat).values, f)
    vert = np.stack([dp.mean_pool(s.values, f) for s in dp.vertical_strips(dmap, cfg.vert)])
    # round through f32 like the stored files so live and cached inputs agree
    r = float(np.float32(sphere.radius))
    lat = depth_features(lat.astype(np.float32).astype(np.float64), r)
    vert = depth_features(vert.astype(np.float32).astype(np.float64), r)
    return DepthInputs(lat[None].astype(np.float32), vert[None].astype(np.float32))


def mesh_contour_inputs(mesh: TriangleMesh, cfg: ProjectionConfig = ProjectionConfig()) -> ContourInputs:
    sphere = measure(mesh, cfg.radius_rule).sphere
    mv = project_contour(mesh, cfg.views_per_ring, cfg.view_size, sphere, cfg.silhouette)
    return ContourInputs(mv.views[None])


def with_views(cfg: ProjectionConfig, views_per_ring: int) -> ProjectionConfig:
    return replace(cfg, views_per_ring=views_per_ring)


def config_dict(cfg: ProjectionConfig) -> dict[str, str]:
    d = asdict(cfg)
    return {"projection.depth": cfg.depth_text(), "projection.contour": cfg.contour_text(),
            "projection.strip_downsample": str(d["strip_downsample"])}
