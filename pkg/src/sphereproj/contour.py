"""Contour projection: a ring-by-ring grid of perspective renderings.

Views are rendered by a small z-buffer rasterizer. Covered pixels carry a
double-sided Lambert shade |n . v| mapped to [64, 255]; background is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .mesh import ProjectionSphere, TriangleMesh, measure

ELEVATIONS = (60.0, 0.0, -60.0)  # montage rows, top to bottom
FOV = 45.0
SHADE_FLOOR = 64


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov: float = FOV
    size: int = 224

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) orthonormal camera axes."""
        f = np.asarray(self.look_at, float) - np.asarray(self.position, float)
        norm = np.linalg.norm(f)
        if norm == 0:
            raise ValueError("camera position coincides with its target")
        f /= norm
        r = np.cross(f, self.up)
        rn = np.linalg.norm(r)
        if rn < 1e-12:
            raise ValueError("camera looks along the up hint")
        r /= rn
        return r, np.cross(r, f), f

    @property
    def focal(self) -> float:
        return self.size / 2 / math.tan(math.radians(self.fov) / 2)

    def pixel_rays(self) -> np.ndarray:
        """Unit ray direction through every pixel center, (size, size, 3)."""
        r, u, f = self.basis()
        c = (np.arange(self.size) + 0.5 - self.size / 2) / self.focal
        yy, xx = np.meshgrid(-c, c, indexing="ij")
        d = xx[..., None] * r + yy[..., None] * u + f
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class MultiViewImage:
    views: np.ndarray  # (rings, views_per_ring, size, size) uint8
    elevations: tuple[float, ...]
    azimuths: tuple[float, ...]

    @property
    def image(self) -> np.ndarray:
        """The montage as one 2-D array: ring rows stacked, azimuth columns side by side."""
        rings, per, s, _ = self.views.shape
        return self.views.transpose(0, 2, 1, 3).reshape(rings * s, per * s)


def camera_grid(sphere: ProjectionSphere, views_per_ring: int = 12, view_size: int = 224,
                elevations=ELEVATIONS, fov: float = FOV) -> list[Camera]:
    """Cameras on the projection sphere in montage order (ring-major)."""
    if views_per_ring < 4:
        raise ValueError("views_per_ring must be >= 4")
    cams = []
    c = np.asarray(sphere.center, float)
    for e in elevations:
        if abs(e) >= 90:
            raise ValueError("camera elevation must stay off the poles")
        er = math.radians(e)
        for k in range(views_per_ring):
            a = math.radians(k * 360.0 / views_per_ring)
            pos = c + sphere.radius * np.array([math.cos(er) * math.cos(a), math.cos(er) * math.sin(a), math.sin(er)])
            cams.append(Camera(pos, c.copy(), fov=fov, size=view_size))
    return cams


@nb.njit(cache=True, error_model="numpy")
def _raster(pc, tris, shade, size, focal, near):
    img = np.zeros((size, size), np.uint8)
    zinv = np.zeros((size, size))
    half = size / 2.0
    for f in range(tris.shape[0]):
        a = pc[tris[f, 0]]
        b = pc[tris[f, 1]]
        c = pc[tris[f, 2]]
        if a[2] <= near or b[2] <= near or c[2] <= near:
            continue
        ax = half + focal * a[0] / a[2]
        ay = half - focal * a[1] / a[2]
        bx = half + focal * b[0] / b[2]
        by = half - focal * b[1] / b[2]
        cx = half + focal * c[0] / c[2]
        cy = half - focal * c[1] / c[2]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        x0 = max(int(math.floor(min(ax, bx, cx) - 0.5)), 0)
        x1 = min(int(math.ceil(max(ax, bx, cx) - 0.5)), size - 1)
        y0 = max(int(math.floor(min(ay, by, cy) - 0.5)), 0)
        y1 = min(int(math.ceil(max(ay, by, cy) - 0.5)), size - 1)
        ia, ib, ic = 1.0 / a[2], 1.0 / b[2], 1.0 / c[2]
        for py in range(y0, y1 + 1):
            sy = py + 0.5
            for px in range(x0, x1 + 1):
                sx = px + 0.5
                w0 = (bx - sx) * (cy - sy) - (by - sy) * (cx - sx)
                w1 = (cx - sx) * (ay - sy) - (cy - sy) * (ax - sx)
                w2 = (ax - sx) * (by - sy) - (ay - sy) * (bx - sx)
                if area > 0.0:
                    if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                        continue
                else:
                    if w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                        continue
                z = (w0 * ia + w1 * ib + w2 * ic) / area
                if z > zinv[py, px]:
                    zinv[py, px] = z
                    img[py, px] = shade[f]
    return img, zinv


def face_shades(mesh: TriangleMesh, camera: Camera, silhouette: bool = False) -> np.ndarray:
    if silhouette:
        return np.full(mesh.n_triangles, 255, np.uint8)
    a, b, c = mesh.corners()
    n = np.cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=1)
    view = (a + b + c) / 3.0 - camera.position
    view /= np.linalg.norm(view, axis=1, keepdims=True)
    cosang = np.abs((n * view).sum(axis=1)) / np.where(nn > 0, nn, 1.0)
    return np.rint(SHADE_FLOOR + (255 - SHADE_FLOOR) * np.clip(cosang, 0.0, 1.0)).astype(np.uint8)


def rasterize(mesh: TriangleMesh, camera: Camera, silhouette: bool = False, return_depth: bool = False):
    """Render one grayscale view. Triangles with a vertex on or behind the near
    plane are culled (no clipping)."""
    if mesh.n_triangles == 0:
        raise ValueError("cannot render an empty mesh")
    r, u, f = camera.basis()
    rel = mesh.vertices - camera.position
    pc = np.ascontiguousarray(np.stack([rel @ r, rel @ u, rel @ f], axis=1))
    near = 1e-9 * max(float(np.linalg.norm(np.asarray(camera.look_at) - camera.position)), 1e-300)
    img, zinv = _raster(pc, mesh.triangles, face_shades(mesh, camera, silhouette), camera.size, camera.focal, near)
    if return_depth:
        with np.errstate(divide="ignore"):
            depth = np.where(zinv > 0, 1.0 / np.where(zinv > 0, zinv, 1.0), np.inf)
        return img, depth
    return img


def montage(views, views_per_ring: int | None = None, elevations=ELEVATIONS) -> MultiViewImage:
    """Arrange ring-major views into the grid: row = elevation ring (top is the
    highest), column = azimuth index increasing eastward."""
    views = np.asarray(views)
    rings = len(elevations)
    if views_per_ring is None:
        views_per_ring = len(views) // rings
    if len(views) != rings * views_per_ring or views.ndim != 3:
        raise ValueError(f"expected {rings} x {views_per_ring} square views, got {views.shape}")
    grid = views.reshape(rings, views_per_ring, *views.shape[1:])
    az = tuple(k * 360.0 / views_per_ring for k in range(views_per_ring))
    return MultiViewImage(grid, tuple(elevations), az)


def project_contour(mesh: TriangleMesh, views_per_ring: int = 12, view_size: int = 224,
                    sphere: ProjectionSphere | None = None, silhouette: bool = False) -> MultiViewImage:
    if sphere is None:
        sphere = measure(mesh).sphere
    cams = camera_grid(sphere, views_per_ring, view_size)
    return montage(np.stack([rasterize(mesh, cam, silhouette) for cam in cams]), views_per_ring)
