"""Octree over mesh triangles for first-hit ray queries.

The tree is stored flat (parallel arrays indexed by node id) so traversal can
run inside numba kernels. Triangles are referenced by index only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .mesh import TriangleMesh

MAX_DEPTH = 10
LEAF_TARGET = 16
_INFLATE = 1e-6


@dataclass(frozen=True)
class Octree:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int64
    node_lo: np.ndarray  # (N, 3) cube corner
    node_size: np.ndarray  # (N,) cube edge length
    node_depth: np.ndarray  # (N,)
    node_child: np.ndarray  # (N, 8) child ids, -1 for leaves
    leaf_start: np.ndarray  # (N,) offset into leaf_tris
    leaf_count: np.ndarray  # (N,)
    leaf_tris: np.ndarray  # concatenated triangle indices of all leaves
    max_depth: int
    leaf_target: int

    @property
    def n_nodes(self) -> int:
        return len(self.node_size)

    def leaves(self):
        """Yield (node id, depth, triangle indices) for every leaf."""
        for n in range(self.n_nodes):
            if self.node_child[n, 0] < 0:
                s = self.leaf_start[n]
                yield n, int(self.node_depth[n]), self.leaf_tris[s:s + self.leaf_count[n]]

    def bounds(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        lo = self.node_lo[node]
        return lo, lo + self.node_size[node]


@nb.njit(cache=True)
def _child_members(idx, a, b, c, lo, half, pad):
    """Triangles of ``idx`` overlapping the cube [lo, lo + half] padded by ``pad``.

    Bounding-box test first, then the separating-axis test on the triangle
    normal and the 9 edge x box-axis products. Padding makes the answer err
    towards overlap (conservative); degenerate triangles give zero axes,
    which never separate.
    """
    h = half / 2 + pad
    cx, cy, cz = lo[0] + half / 2, lo[1] + half / 2, lo[2] + half / 2
    out = np.empty(len(idx), dtype=np.int64)
    m = 0
    v = np.empty((3, 3))
    e = np.empty((3, 3))
    ax = np.empty(3)
    for t in idx:
        v[0, 0], v[0, 1], v[0, 2] = a[t, 0] - cx, a[t, 1] - cy, a[t, 2] - cz
        v[1, 0], v[1, 1], v[1, 2] = b[t, 0] - cx, b[t, 1] - cy, b[t, 2] - cz
        v[2, 0], v[2, 1], v[2, 2] = c[t, 0] - cx, c[t, 1] - cy, c[t, 2] - cz
        sep = False
        for k in range(3):
            mn = min(v[0, k], v[1, k], v[2, k])
            mx = max(v[0, k], v[1, k], v[2, k])
            if mn > h or mx < -h:
                sep = True
        if sep:
            continue
        for i in range(3):
            j = (i + 1) % 3
            for k in range(3):
                e[i, k] = v[j, k] - v[i, k]
        nx = e[0, 1] * e[1, 2] - e[0, 2] * e[1, 1]
        ny = e[0, 2] * e[1, 0] - e[0, 0] * e[1, 2]
        nz = e[0, 0] * e[1, 1] - e[0, 1] * e[1, 0]
        if abs(nx * v[0, 0] + ny * v[0, 1] + nz * v[0, 2]) > h * (abs(nx) + abs(ny) + abs(nz)):
            continue
        for i in range(3):
            for k in range(3):
                # axis = unit_k x e_i
                k1, k2 = (k + 1) % 3, (k + 2) % 3
                ax[k] = 0.0
                ax[k1] = -e[i, k2]
                ax[k2] = e[i, k1]
                p0 = ax[0] * v[0, 0] + ax[1] * v[0, 1] + ax[2] * v[0, 2]
                p1 = ax[0] * v[1, 0] + ax[1] * v[1, 1] + ax[2] * v[1, 2]
                p2 = ax[0] * v[2, 0] + ax[1] * v[2, 1] + ax[2] * v[2, 2]
                r = h * (abs(ax[0]) + abs(ax[1]) + abs(ax[2]))
                if min(p0, p1, p2) > r or max(p0, p1, p2) < -r:
                    sep = True
                    break
            if sep:
                break
        if not sep:
            out[m] = t
            m += 1
    return out[:m]


def build(mesh: TriangleMesh, max_depth: int = MAX_DEPTH, leaf_target: int = LEAF_TARGET) -> Octree:
    """Build the tree. A node splits when it holds more than ``leaf_target``
    triangles and sits above ``max_depth``. A triangle goes to every child cube
    it overlaps by a separating-axis test on the slightly padded cube, so
    membership is conservative but thin triangles are not smeared over their
    whole bounding boxes (fans around a cap center would otherwise never split)."""
    if mesh.n_triangles == 0:
        raise ValueError("cannot build an octree over an empty mesh")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    a, b, c = mesh.corners()
    tri_lo = np.minimum(np.minimum(a, b), c)
    tri_hi = np.maximum(np.maximum(a, b), c)
    lo, hi = tri_lo.min(axis=0), tri_hi.max(axis=0)
    size = float((hi - lo).max())
    size = size * (1 + 2 * _INFLATE) if size > 0 else 1.0
    root_lo = (lo + hi) / 2 - size / 2

    node_lo, node_size, node_depth, node_child = [], [], [], []
    leaf_start, leaf_count, chunks = [], [], []
    n_leaf_tris = 0
    offsets = np.array([[(k >> 0) & 1, (k >> 1) & 1, (k >> 2) & 1] for k in range(8)], dtype=np.float64)

    # iterative DFS with explicit child slots so node ids are deterministic
    stack = [(root_lo, size, 0, np.arange(mesh.n_triangles), -1, -1)]
    while stack:
        lo_, size_, depth, idx, parent, slot = stack.pop()
        nid = len(node_size)
        node_lo.append(lo_)
        node_size.append(size_)
        node_depth.append(depth)
        node_child.append([-1] * 8)
        if parent >= 0:
            node_child[parent][slot] = nid
        if len(idx) > leaf_target and depth < max_depth:
            leaf_start.append(0)
            leaf_count.append(0)
            half = size_ / 2
            pad = size_ * _INFLATE
            for k in range(7, -1, -1):
                clo = lo_ + offsets[k] * half
                stack.append((clo, half, depth + 1, _child_members(idx, a, b, c, clo, half, pad), nid, k))
        else:
            leaf_start.append(n_leaf_tris)
            leaf_count.append(len(idx))
            chunks.append(idx)
            n_leaf_tris += len(idx)

    return Octree(
        vertices=mesh.vertices,
        triangles=mesh.triangles,
        node_lo=np.array(node_lo, dtype=np.float64).reshape(-1, 3),
        node_size=np.array(node_size, dtype=np.float64),
        node_depth=np.array(node_depth, dtype=np.int64),
        node_child=np.array(node_child, dtype=np.int64).reshape(-1, 8),
        leaf_start=np.array(leaf_start, dtype=np.int64),
        leaf_count=np.array(leaf_count, dtype=np.int64),
        leaf_tris=np.concatenate(chunks).astype(np.int64) if chunks else np.zeros(0, np.int64),
        max_depth=max_depth,
        leaf_target=leaf_target,
    )


# --- kernels -----------------------------------------------------------------


@nb.njit(cache=True, error_model="numpy")
def _ray_setup(d):
    # watertight test: permute so kz is the dominant axis, keep winding
    ax = np.abs(d)
    kz = 0
    if ax[1] > ax[kz]:
        kz = 1
    if ax[2] > ax[kz]:
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    if d[kz] < 0:
        kx, ky = ky, kx
    sz = 1.0 / d[kz]
    return kx, ky, kz, d[kx] * sz, d[ky] * sz, sz


@nb.njit(cache=True, error_model="numpy")
def _tri_hit(o, kx, ky, kz, sx, sy, sz, p0, p1, p2, t_lo, t_hi):
    """Watertight ray/triangle test; returns t in (t_lo, t_hi] or -1."""
    ax = p0[0] - o[0]
    ay = p0[1] - o[1]
    az = p0[2] - o[2]
    bx = p1[0] - o[0]
    by = p1[1] - o[1]
    bz = p1[2] - o[2]
    cx = p2[0] - o[0]
    cy = p2[1] - o[1]
    cz = p2[2] - o[2]
    A = (ax, ay, az)
    B = (bx, by, bz)
    C = (cx, cy, cz)
    Ax = A[kx] - sx * A[kz]
    Ay = A[ky] - sy * A[kz]
    Bx = B[kx] - sx * B[kz]
    By = B[ky] - sy * B[kz]
    Cx = C[kx] - sx * C[kz]
    Cy = C[ky] - sy * C[kz]
    U = Cx * By - Cy * Bx
    V = Ax * Cy - Ay * Cx
    W = Bx * Ay - By * Ax
    if (U < 0.0 or V < 0.0 or W < 0.0) and (U > 0.0 or V > 0.0 or W > 0.0):
        return -1.0
    det = U + V + W
    if det == 0.0:
        return -1.0
    T = sz * (U * A[kz] + V * B[kz] + W * C[kz])
    t = T / det
    if t > t_lo and t <= t_hi:
        return t
    return -1.0


@nb.njit(cache=True, error_model="numpy")
def _slab(o, inv, lo, size):
    t0 = -np.inf
    t1 = np.inf
    for a in range(3):
        ta = (lo[a] - o[a]) * inv[a]
        tb = (lo[a] + size - o[a]) * inv[a]
        if ta != ta:  # 0 * inf when the origin lies on a slab plane
            ta = -np.inf
        if tb != tb:
            tb = np.inf
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    return t0, t1


@nb.njit(cache=True, error_model="numpy")
def _first_hit_one(o, d, t_max, eps, verts, tris, node_lo, node_size, node_child,
                   leaf_start, leaf_count, leaf_tris, stack_n, stack_t):
    kx, ky, kz, sx, sy, sz = _ray_setup(d)
    inv = 1.0 / d
    best = np.inf
    t0, t1 = _slab(o, inv, node_lo[0], node_size[0])
    if t0 > t1 or t1 < eps or t0 > t_max:
        return -1.0
    top = 0
    stack_n[0] = 0
    stack_t[0] = t0
    top = 1
    cn = np.empty(8, np.int64)
    ct = np.empty(8, np.float64)
    while top > 0:
        top -= 1
        n = stack_n[top]
        if stack_t[top] > best * (1.0 + 1e-12) + 1e-300:
            continue
        if node_child[n, 0] < 0:
            s = leaf_start[n]
            hi = min(best, t_max)
            for q in range(s, s + leaf_count[n]):
                f = leaf_tris[q]
                t = _tri_hit(o, kx, ky, kz, sx, sy, sz,
                             verts[tris[f, 0]], verts[tris[f, 1]], verts[tris[f, 2]], eps, hi)
                if t > 0.0 and t < best:
                    best = t
                    hi = t
            continue
        m = 0
        lim = min(best, t_max)
        for k in range(8):
            c = node_child[n, k]
            a, b = _slab(o, inv, node_lo[c], node_size[c])
            if a <= b and b >= eps and a <= lim * (1.0 + 1e-12):
                # insertion sort by entry distance, nearest last
                j = m
                while j > 0 and ct[j - 1] < a:
                    cn[j] = cn[j - 1]
                    ct[j] = ct[j - 1]
                    j -= 1
                cn[j] = c
                ct[j] = a
                m += 1
        for j in range(m):
            stack_n[top] = cn[j]
            stack_t[top] = ct[j]
            top += 1
    if best == np.inf:
        return -1.0
    return best


@nb.njit(cache=True, parallel=True, error_model="numpy")
def _first_hits(origins, dirs, t_max, eps, verts, tris, node_lo, node_size, node_child,
                leaf_start, leaf_count, leaf_tris, stack_size):
    n = origins.shape[0]
    out = np.empty(n)
    for r in nb.prange(n):
        stack_n = np.empty(stack_size, np.int64)
        stack_t = np.empty(stack_size, np.float64)
        out[r] = _first_hit_one(origins[r], dirs[r], t_max[r], eps[r], verts, tris, node_lo,
                                node_size, node_child, leaf_start, leaf_count, leaf_tris,
                                stack_n, stack_t)
    return out


@nb.njit(cache=True, parallel=True, error_model="numpy")
def _scan_hits(origins, dirs, t_max, eps, verts, tris):
    n = origins.shape[0]
    out = np.empty(n)
    for r in nb.prange(n):
        o = origins[r]
        kx, ky, kz, sx, sy, sz = _ray_setup(dirs[r])
        best = np.inf
        hi = t_max[r]
        for f in range(tris.shape[0]):
            t = _tri_hit(o, kx, ky, kz, sx, sy, sz,
                         verts[tris[f, 0]], verts[tris[f, 1]], verts[tris[f, 2]], eps[r], hi)
            if t > 0.0 and t < best:
                best = t
                hi = t
        out[r] = best if best < np.inf else -1.0
    return out


def _prep(origins, dirs, t_max):
    origins = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
    dirs = np.ascontiguousarray(np.atleast_2d(dirs), dtype=np.float64)
    if origins.shape != dirs.shape or origins.shape[1] != 3:
        raise ValueError("origins and directions must be matching (n, 3) arrays")
    t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (len(origins),)).copy()
    if np.any(t_max <= 0):
        raise ValueError("t_max must be positive")
    return origins, dirs, t_max, 1e-9 * t_max


def first_hits(tree: Octree, origins, dirs, t_max) -> np.ndarray:
    """Nearest hit distance per ray in (1e-9 * t_max, t_max]; NaN where absent.

    ``dirs`` must be unit vectors.
    """
    origins, dirs, t_max, eps = _prep(origins, dirs, t_max)
    out = _first_hits(origins, dirs, t_max, eps, tree.vertices, tree.triangles, tree.node_lo,
                      tree.node_size, tree.node_child, tree.leaf_start, tree.leaf_count,
                      tree.leaf_tris, 8 * (tree.max_depth + 1) + 1)
    out[out < 0] = np.nan
    return out


def first_hit(tree: Octree, origin, direction, t_max: float) -> float | None:
    t = first_hits(tree, np.asarray(origin)[None], np.asarray(direction)[None], t_max)[0]
    return None if np.isnan(t) else float(t)


def scan_hits(mesh: TriangleMesh, origins, dirs, t_max) -> np.ndarray:
    """Exhaustive counterpart of :func:`first_hits` (same triangle test, no tree)."""
    origins, dirs, t_max, eps = _prep(origins, dirs, t_max)
    out = _scan_hits(origins, dirs, t_max, eps, mesh.vertices, mesh.triangles)
    out[out < 0] = np.nan
    return out
