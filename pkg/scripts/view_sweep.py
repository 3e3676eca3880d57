"""Contour-net test accuracy as a function of views per ring.

    python3 scripts/view_sweep.py --views 4 6 12 --seeds 0 1 2
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
    ap.add_argument("--workdir", default="runs/views")
    ap.add_argument("--views", type=int, nargs="+", default=[6, 12])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--train", type=int, default=200)
    ap.add_argument("--test", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=C.Schedule().epochs_contour)
    ap.add_argument("--threads", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    set_threads(args.threads)

    work = Path(args.workdir)
    manifest = synthetic_manifest(args.train, args.test, args.data_seed)
    ytr, yte = manifest.labels("train"), manifest.labels("test")
    lines = []
    for v in args.views:
        cache = ProjectionCache(work / "cache", with_views(ProjectionConfig(), v))
        cache.materialize(manifest, depth=False)
        tr, te = cache.contour_inputs(manifest, "train"), cache.contour_inputs(manifest, "test")
        accs = []
        t0 = time.perf_counter()
        for s in args.seeds:
            model = C.train_contour(tr, ytr, manifest.classes, C.ContourNetConfig(views_per_ring=v), seed=s,
                                    schedule=C.Schedule(epochs_contour=args.epochs))
            accs.append(C.evaluate(C.predict_proba(model, te), yte, manifest.classes).instance_accuracy)
        line = (f"views={v} mean={np.mean(accs):.2f} std={np.std(accs):.2f} "
                f"runs={','.join(f'{a:.2f}' for a in accs)} seconds={time.perf_counter() - t0:.1f}")
        print(line)
        lines.append(line)
    (work / "view_sweep.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
