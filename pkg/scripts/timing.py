"""Per-stage timing of the projections on ~10k-triangle synthetic meshes.

    python3 scripts/timing.py --repeats 3
"""

import argparse
import time

import numpy as np

from sphereproj import depth as dp
from sphereproj.config import set_threads
from sphereproj.contour import project_contour
from sphereproj.mesh import generate_shape, measure
from sphereproj.octree import build

# generator settings giving about 10k triangles (the ellipsoid 5k)
MESHES = [
    ("torus", {"u_segments": 160, "v_segments": 32}),
    ("cylinder", {"segments": 128, "rings": 38}),
    ("cone", {"segments": 128, "rings": 38}),
    ("box", {"subdiv": 29}),
    ("ellipsoid", {"subdiv": 4}),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--view-size", type=int, default=64)
    ap.add_argument("--threads", type=int, default=0)
    args = ap.parse_args()
    n_threads = set_threads(args.threads)

    warm = generate_shape("box", None, 0)  # numba compilation stays out of the numbers
    dp.project_depth(warm, dp.GridConfig(), measure(warm).sphere, build(warm))
    project_contour(warm, 12, args.view_size)

    print(f"threads={n_threads} view_size={args.view_size}")
    print(f"{'mesh':<10} {'tris':>6} {'octree':>8} {'depth':>8} {'strips':>8} {'montage':>8}")
    totals = []
    for kind, params in MESHES:
        mesh = generate_shape(kind, params, 1)
        t = np.zeros(4)
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            sphere = measure(mesh).sphere
            tree = build(mesh)
            t1 = time.perf_counter()
            dmap = dp.project_depth(mesh, dp.GridConfig(), sphere, tree)
            t2 = time.perf_counter()
            dp.latitude_strip(dmap, dp.LatStripConfig())
            dp.vertical_strips(dmap, dp.VertStripConfig())
            t3 = time.perf_counter()
            project_contour(mesh, 12, args.view_size, sphere)
            t4 = time.perf_counter()
            t += [t1 - t0, t2 - t1, t3 - t2, t4 - t3]
        t /= args.repeats
        totals.append(t)
        print(f"{kind:<10} {mesh.n_triangles:>6} " + " ".join(f"{x:8.3f}" for x in t))
    m = np.mean(totals, axis=0)
    print(f"{'mean':<10} {'':>6} " + " ".join(f"{x:8.3f}" for x in m))
    print(f"depth_projection_seconds={m[0] + m[1]:.3f} montage_seconds={m[3]:.3f}")


if __name__ == "__main__":
    main()
