"""Desk-scale classification: depth net, contour net and their fusion on the
8-class synthetic set, several training seeds on one data seed.

    python3 scripts/desk_classification.py --workdir runs/desk --seeds 0 1 2
"""

import argparse
import logging
import time
from pathlib import Path

import numpy as np

from sphereproj import classifier as C
from sphereproj.config import set_threads
from sphereproj.dataset import ProjectionCache, ProjectionConfig, synthetic_manifest, with_views


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", default="runs/desk")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--train", type=int, default=200, help="training meshes per class")
    ap.add_argument("--test", type=int, default=50, help="test meshes per class")
    ap.add_argument("--depth-channels", type=int, nargs=3, default=[4, 8, 16])
    ap.add_argument("--views", type=int, default=12)
    ap.add_argument("--threads", type=int, default=0)
    ap.add_argument("--save-models", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    set_threads(args.threads)

    work = Path(args.workdir)
    manifest = synthetic_manifest(args.train, args.test, args.data_seed)
    cache = ProjectionCache(work / "cache", with_views(ProjectionConfig(), args.views))
    t0 = time.perf_counter()
    print("\n".join(cache.materialize(manifest).lines()))
    ytr, yte = manifest.labels("train"), manifest.labels("test")
    d_tr, d_te = cache.depth_inputs(manifest, "train"), cache.depth_inputs(manifest, "test")
    c_tr, c_te = cache.contour_inputs(manifest, "train"), cache.contour_inputs(manifest, "test")
    dcfg = C.DepthNetConfig(channels=tuple(args.depth_channels))
    ccfg = C.ContourNetConfig(views_per_ring=args.views)

    rows = []
    for s in args.seeds:
        dm = C.train_depth(d_tr, ytr, manifest.classes, dcfg, seed=s)
        cm = C.train_contour(c_tr, ytr, manifest.classes, ccfg, seed=s)
        pd, pc = C.predict_proba(dm, d_te), C.predict_proba(cm, c_te)
        accs = [C.evaluate(p, yte, manifest.classes).instance_accuracy for p in (pd, pc, C.fuse(pd, pc))]
        rows.append(accs)
        print(f"seed {s}: depth {accs[0]:.2f} contour {accs[1]:.2f} fused {accs[2]:.2f}")
        if args.save_models:
            C.save_model(dm, work / f"depth_seed{s}.spjm")
            C.save_model(cm, work / f"contour_seed{s}.spjm")
    mean = np.mean(rows, axis=0)
    lines = [f"seed_{s}={' '.join(f'{a:.2f}' for a in r)}" for s, r in zip(args.seeds, rows)]
    lines += [f"mean_depth={mean[0]:.2f}", f"mean_contour={mean[1]:.2f}", f"mean_fused={mean[2]:.2f}",
              f"seconds={time.perf_counter() - t0:.1f}"]
    (work / "results.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


if __name__ == "__main__":
    main()
