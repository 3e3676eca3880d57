"""Spherical depth maps and the cylindrical strips cut from them.

Angles are in degrees. Colatitude theta is measured from the north pole (+z),
azimuth phi counter-clockwise from +x. Grid rows sit at half-pixel offsets in
colatitude, so no sample lands on a pole.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import octree as _octree
from .mesh import ProjectionSphere, TriangleMesh, measure


@dataclass(frozen=True)
class GridConfig:
    m: int = 90  # colatitude rows
    n: int = 180  # azimuth columns

    def __post_init__(self):
        if self.m < 2 or self.n < 4:
            raise ValueError("grid needs m >= 2 and n >= 4")

    @property
    def d_theta(self) -> float:
        return 180.0 / self.m

    @property
    def d_phi(self) -> float:
        return 360.0 / self.n


@dataclass(frozen=True)
class LatStripConfig:
    m_h: int = 240
    n_h: int = 360
    band: tuple[float, float] = (30.0, 150.0)

    def __post_init__(self):
        lo, hi = self.band
        if not (0 < lo < hi < 180):
            raise ValueError("latitude band must satisfy 0 < lo < hi < 180")
        if self.m_h < 2 or self.n_h < 2:
            raise ValueError("latitude strip needs at least 2x2 samples")


@dataclass(frozen=True)
class VertStripConfig:
    n_v: int = 180  # samples along the meridian
    m_v: int = 60  # samples across
    l_v: int = 12  # number of strips
    half_width: float = 15.0

    def __post_init__(self):
        if self.l_v < 1 or self.n_v < 2 or self.m_v < 1:
            raise ValueError("bad vertical strip config")
        if not 0 < self.half_width < 90:
            raise ValueError("half_width must lie in (0, 90)")

    @property
    def spacing(self) -> float:
        return 360.0 / self.l_v


@dataclass(frozen=True)
class SphericalDepthMap:
    grid: GridConfig
    values: np.ndarray  # (m, n); 0 means no hit
    sphere: ProjectionSphere


@dataclass(frozen=True)
class StripTensor:
    values: np.ndarray
    kind: str  # "latitude" or "vertical"
    index: int = 0
    theta: np.ndarray = field(default=None, repr=False)
    phi: np.ndarray = field(default=None, repr=False)


def sph_to_dir(theta, phi) -> np.ndarray:
    t = np.radians(theta)
    p = np.radians(phi)
    st = np.sin(t)
    return np.stack([st * np.cos(p), st * np.sin(p), np.cos(t)], axis=-1)


def dir_to_sph(d) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(d, dtype=np.float64)
    z = np.clip(d[..., 2], -1.0, 1.0)
    theta = np.degrees(np.arccos(z))
    phi = np.mod(np.degrees(np.arctan2(d[..., 1], d[..., 0])), 360.0)
    return theta, phi


def grid_angles(grid: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    theta = 180.0 * (np.arange(grid.m) + 0.5) / grid.m
    phi = 360.0 * np.arange(grid.n) / grid.n
    return theta, phi


def grid_direction(grid: GridConfig, i, j) -> np.ndarray:
    if np.any(np.asarray(i) < 0) or np.any(np.asarray(i) >= grid.m) or np.any(np.asarray(j) < 0) or np.any(np.asarray(j) >= grid.n):
        raise IndexError("grid index out of range")
    theta = 180.0 * (np.asarray(i) + 0.5) / grid.m
    phi = 360.0 * np.asarray(j) / grid.n
    return sph_to_dir(theta, phi)


def grid_directions(grid: GridConfig) -> np.ndarray:
    theta, phi = grid_angles(grid)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return sph_to_dir(tt, pp)


def cast_inward(mesh_or_tree, dirs: np.ndarray, sphere: ProjectionSphere) -> np.ndarray:
    """Depth along each unit direction: shoot from the sphere toward its center.

    Returns the distance to the first hit, or 0 where the ray misses.
    """
    tree = mesh_or_tree if isinstance(mesh_or_tree, _octree.Octree) else _octree.build(mesh_or_tree)
    shape = dirs.shape[:-1]
    d = dirs.reshape(-1, 3)
    origins = sphere.center + sphere.radius * d
    t = _octree.first_hits(tree, origins, -d, 2.0 * sphere.radius)
    return np.nan_to_num(t, nan=0.0).reshape(shape)


def project_depth(mesh: TriangleMesh, grid: GridConfig = GridConfig(), sphere: ProjectionSphere | None = None,
                  tree: _octree.Octree | None = None) -> SphericalDepthMap:
    """Depth-based projection on the m x n grid.

    ``sphere`` defaults to the measured projection sphere of ``mesh``.
    """
    if mesh.n_triangles == 0:
        raise ValueError("cannot project an empty mesh")
    if sphere is None:
        sphere = measure(mesh).sphere
    if tree is None:
        tree = _octree.build(mesh)
    values = cast_inward(tree, grid_directions(grid), sphere)
    values.setflags(write=False)
    return SphericalDepthMap(grid, values, sphere)


def _interp_index(values: np.ndarray, r, c) -> np.ndarray:
    """Bilinear lookup at fractional (row, col); rows clamp, columns wrap."""
    n = values.shape[1]
    c = np.mod(np.asarray(c, dtype=np.float64), n)
    j0 = np.floor(c)
    return _blend(values, r, j0.astype(np.int64) % n, c - j0)


def _blend(values: np.ndarray, r, j0, s) -> np.ndarray:
    # lerp form a + s (b - a) reproduces constants and nodes exactly
    m, n = values.shape
    r = np.clip(np.asarray(r, dtype=np.float64), 0.0, m - 1.0)
    i0 = np.floor(r).astype(np.int64)  # the last row gets t = 0, never t = 1
    t = r - i0
    i1 = np.minimum(i0 + 1, m - 1)
    j1 = (j0 + 1) % n
    a, b = values[i0, j0], values[i0, j1]
    c, d = values[i1, j0], values[i1, j1]
    top = a + s * (b - a)
    bot = c + s * (d - c)
    return top + t * (bot - top)


def interpolate(dmap: SphericalDepthMap, theta, phi) -> np.ndarray:
    """Bilinear depth at arbitrary (colatitude, azimuth) in degrees."""
    g = dmap.grid
    r = np.asarray(theta, dtype=np.float64) / g.d_theta - 0.5
    c = np.asarray(phi, dtype=np.float64) / g.d_phi
    return _interp_index(dmap.values, r, c)


def latitude_angles(cfg: LatStripConfig) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = cfg.band
    theta = lo + (hi - lo) * (np.arange(cfg.m_h) + 0.5) / cfg.m_h
    phi = 360.0 * np.arange(cfg.n_h) / cfg.n_h
    return theta, phi


def latitude_strip(dmap: SphericalDepthMap, cfg: LatStripConfig = LatStripConfig(),
                   mesh: TriangleMesh | None = None) -> StripTensor:
    """Latitude band around the equator, periodic in azimuth.

    Samples are interpolated from ``dmap``; passing ``mesh`` ray-casts them
    directly instead.
    """
    theta, phi = latitude_angles(cfg)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    if mesh is not None:
        vals = cast_inward(mesh, sph_to_dir(tt, pp), dmap.sphere)
    else:
        g = dmap.grid
        # integer column and fraction straight from the sample index, so a
        # circular shift of the map is an exact shift of the strip
        j = np.arange(cfg.n_h) * g.n
        j0, s = j // cfg.n_h, (j % cfg.n_h) / cfg.n_h
        rows = theta / g.d_theta - 0.5
        rr = np.broadcast_to(rows[:, None], (cfg.m_h, cfg.n_h))
        vals = _blend(dmap.values, rr, np.broadcast_to(j0 % g.n, rr.shape), np.broadcast_to(s, rr.shape))
    return StripTensor(vals, "latitude", 0, tt, pp)


def vertical_base_angles(cfg: VertStripConfig) -> tuple[np.ndarray, np.ndarray]:
    """(theta, phi) of strip 0 samples, shape (n_v, m_v): rows run pole to
    pole along the meridian, columns run eastward across it."""
    u = np.radians(180.0 * (np.arange(cfg.n_v) + 0.5) / cfg.n_v)
    hw = cfg.half_width
    xi = np.radians(-hw + 2 * hw * (np.arange(cfg.m_v) + 0.5) / cfg.m_v)
    uu, xx = np.meshgrid(u, xi, indexing="ij")
    d = np.stack([np.cos(xx) * np.sin(uu), np.sin(xx), np.cos(xx) * np.cos(uu)], axis=-1)
    return dir_to_sph(d)


def vertical_strips(dmap: SphericalDepthMap, cfg: VertStripConfig = VertStripConfig(),
                    mesh: TriangleMesh | None = None) -> list[StripTensor]:
    """The ring of ``l_v`` constant-width meridian bands, strip k centred on
    azimuth k * 360 / l_v."""
    theta, phi0 = vertical_base_angles(cfg)
    out = []
    tree = _octree.build(mesh) if mesh is not None else None
    for k in range(cfg.l_v):
        phi = np.mod(phi0 + k * cfg.spacing, 360.0)
        if tree is not None:
            vals = cast_inward(tree, sph_to_dir(theta, phi), dmap.sphere)
        else:
            vals = interpolate(dmap, theta, phi)
        out.append(StripTensor(vals, "vertical", k, theta, phi))
    return out


def shift_columns(values: np.ndarray, shift: int) -> np.ndarray:
    """Circular shift along azimuth: column j moves to j + shift."""
    return np.roll(values, shift, axis=-1)


def mean_pool(values: np.ndarray, fr: int, fc: int | None = None) -> np.ndarray:
    """Non-overlapping block mean over the last two axes (trailing remainder dropped)."""
    fc = fr if fc is None else fc
    *lead, h, w = values.shape
    h2, w2 = h // fr, w // fc
    v = values[..., :h2 * fr, :w2 * fc].reshape(*lead, h2, fr, w2, fc)
    return v.mean(axis=(-3, -1))
