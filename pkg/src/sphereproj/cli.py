"""sphereproj command line.

Every command takes ``--config FILE`` (flat key=value) and any number of
``--set key=value`` overrides. Output directories receive ``config.txt``,
the effective configuration plus the tool version. Failures exit nonzero
with a single ``error: <kind>: <reason>`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import classifier as clf
from . import depth as dp
from .config import ConfigError, RunConfig, describe, set_threads
from .contour import project_contour
from .dataset import (Manifest, ProjectionCache, ingest, load_upright, mesh_contour_inputs, mesh_depth_inputs,
                      synthetic_manifest)
from .formats import read_sphd, to_gray, write_pgm, write_sphc, write_sphd
from .mesh import ProjectionSphere, measure
from .octree import build as build_octree

log = logging.getLogger("sphereproj")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg.override(getattr(args, "set", None))


def _mesh(path, cfg: RunConfig):
    return load_upright(path, cfg.get("mesh.up"))


def _echo(cfg: RunConfig, outdir: Path, name: str = "config.txt") -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / name).write_text(cfg.to_text())


# --- projection commands -----------------------------------------------------------


def cmd_project_depth(args, cfg: RunConfig) -> int:
    mesh = _mesh(args.mesh, cfg)
    pc = cfg.projection()
    sphere = measure(mesh, pc.radius_rule).sphere
    tree = build_octree(mesh, cfg.int("octree.max_depth"), cfg.int("octree.leaf_target"))
    t = time.perf_counter()
    dmap = dp.project_depth(mesh, pc.grid, sphere, tree)
    secs = time.perf_counter() - t
    out = Path(args.output)
    _echo(cfg, out)
    write_sphd(out / "depth.sphd", dmap.values, sphere.radius)
    write_pgm(out / "depth.pgm", to_gray(dmap.values))
    print(f"depth {dmap.values.shape[0]}x{dmap.values.shape[1]} radius={sphere.radius:.6g} "
          f"hits={np.count_nonzero(dmap.values)} seconds={secs:.3f}")
    return 0


def cmd_strips(args, cfg: RunConfig) -> int:
    pc = cfg.projection()
    src = Path(args.input)
    mesh = None
    if src.suffix.lower() == ".sphd":
        values, radius = read_sphd(src)
        grid = dp.GridConfig(*values.shape)
        dmap = dp.SphericalDepthMap(grid, values, ProjectionSphere(np.zeros(3), radius))
    else:
        mesh = _mesh(src, cfg)
        dmap = dp.project_depth(mesh, pc.grid, measure(mesh, pc.radius_rule).sphere)
    out = Path(args.output)
    _echo(cfg, out)
    r = dmap.sphere.radius
    lat = dp.latitude_strip(dmap, pc.lat, mesh if args.direct else None)
    write_sphd(out / "latitude.sphd", lat.values, r)
    write_pgm(out / "latitude.pgm", to_gray(lat.values))
    for s in dp.vertical_strips(dmap, pc.vert, mesh if args.direct else None):
        write_sphd(out / f"vertical_{s.index:02d}.sphd", s.values, r)
        write_pgm(out / f"vertical_{s.index:02d}.pgm", to_gray(s.values))
    print(f"latitude {lat.values.shape[0]}x{lat.values.shape[1]}, {pc.vert.l_v} vertical strips "
          f"{pc.vert.n_v}x{pc.vert.m_v}")
    return 0


def cmd_project_contour(args, cfg: RunConfig) -> int:
    mesh = _mesh(args.mesh, cfg)
    pc = cfg.projection()
    t = time.perf_counter()
    mv = project_contour(mesh, pc.views_per_ring, pc.view_size, measure(mesh, pc.radius_rule).sphere,
                         pc.silhouette)
    secs = time.perf_counter() - t
    out = Path(args.output)
    _echo(cfg, out)
    flat = mv.views.reshape(-1, pc.view_size, pc.view_size)
    write_sphc(out / "montage.sphc", flat.astype(np.float32) / np.float32(255.0))
    write_pgm(out / "montage.pgm", mv.image)
    print(f"montage {len(mv.elevations)}x{pc.views_per_ring} views of {pc.view_size}px seconds={secs:.3f}")
    return 0


# --- dataset commands ---------------------------------------------------------------


def _cache_dir(manifest: Manifest, cfg: RunConfig, override=None) -> str:
    return override or manifest.cache_dir or cfg.get("data.cache_dir")


def cmd_dataset(args, cfg: RunConfig) -> int:
    pc = cfg.projection()
    if args.action == "gen":
        classes = cfg.get("data.classes").split(",")
        m = synthetic_manifest(cfg.int("data.train_per_class"), cfg.int("data.test_per_class"),
                               cfg.int("data.seed"), classes)
        m = m.with_projection(pc, args.cache or cfg.get("data.cache_dir"))
        m.save(args.output)
        print(f"entries={len(m.entries)} classes={len(m.classes)} digest={m.digest()}")
        return 0
    if args.action == "ingest":
        m, failed = ingest(args.root)
        m = m.with_projection(pc, args.cache or cfg.get("data.cache_dir"))
        m.save(args.output)
        print(f"entries={len(m.entries)} classes={len(m.classes)} failed={failed} digest={m.digest()}")
        return 0
    m = Manifest.load(args.manifest)
    cache = ProjectionCache(_cache_dir(m, cfg, args.cache), pc)
    summary = cache.materialize(m, progress=lambda i, n: log.info("materialized %d/%d", i, n))
    _echo(cfg, cache.root)
    print("\n".join(summary.lines()))
    return 0 if summary.failed == 0 else 3


# --- training / evaluation ----------------------------------------------------------


def _inputs(kind: str, manifest: Manifest, cfg: RunConfig, split: str, cache_dir=None):
    cache = ProjectionCache(_cache_dir(manifest, cfg, cache_dir), cfg.projection())
    cache.materialize(manifest, depth=kind == "depth", contour=kind == "contour")
    if kind == "depth":
        return cache.depth_inputs(manifest, split)
    return cache.contour_inputs(manifest, split)


def cmd_train(args, cfg: RunConfig) -> int:
    if args.seed is not None:
        cfg.set("train.seed", args.seed)
    manifest = Manifest.load(args.manifest)
    inputs = _inputs(args.kind, manifest, cfg, "train", args.cache)
    labels = manifest.labels("train")
    seed = cfg.int("train.seed")
    extra = cfg.as_dict()
    if args.kind == "depth":
        model = clf.train_depth(inputs, labels, manifest.classes, cfg.depthnet(), cfg.sgd(), seed,
                                cfg.schedule(), extra)
    else:
        model = clf.train_contour(inputs, labels, manifest.classes, cfg.contournet(), cfg.sgd(), seed,
                                  cfg.schedule(), extra)
    out = Path(args.output)
    clf.save_model(model, out)
    _echo(cfg, out.parent, out.name + ".config.txt")
    last = model.history[-1]
    print(f"model={out} stage={last['stage']} loss={last['loss']} acc={last['acc']}")
    return 0


def _model_config(model: clf.TrainedModel) -> RunConfig:
    return RunConfig.from_text("".join(f"{k}={v}\n" for k, v in model.config.items()), strict=False)


def cmd_eval(args, cfg: RunConfig) -> int:
    manifest = Manifest.load(args.manifest)
    labels = manifest.labels(args.split)
    probs = []
    for path in args.model.split(","):
        model = clf.load_model(path)
        mcfg = _model_config(model)
        if list(model.class_names) != list(manifest.classes):
            raise ValueError(f"model classes {model.class_names} differ from manifest classes")
        inputs = _inputs(model.kind, manifest, mcfg, args.split, args.cache)
        probs.append(clf.predict_proba(model, inputs))
    p = probs[0] if len(probs) == 1 else clf.fuse(*probs)
    report = clf.evaluate(p, labels, manifest.classes)
    text = report.table() + "\n\n" + "\n".join(report.lines()) + "\n"
    print(text, end="")
    if args.output:
        out = Path(args.output)
        _echo(cfg, out)
        (out / "report.txt").write_text(text)
    return 0


def cmd_predict(args, cfg: RunConfig) -> int:
    mesh = _mesh(args.mesh, cfg)
    probs = []
    names = None
    for path in args.model.split(","):
        model = clf.load_model(path)
        pc = _model_config(model).projection()
        if model.kind == "depth":
            inputs = mesh_depth_inputs(mesh, pc)
        else:
            inputs = mesh_contour_inputs(mesh, pc)
        probs.append(clf.predict_proba(model, inputs)[0])
        names = model.class_names
    p = probs[0] if len(probs) == 1 else clf.fuse(*probs)
    for i in np.argsort(-p, kind="stable"):
        print(f"{names[i]} {p[i]:.6f}")
    return 0


def cmd_selftest(args, cfg: RunConfig) -> int:
    from .selftest import run_all

    return 0 if run_all() else 1


def cmd_config(args, cfg: RunConfig) -> int:
    print(describe() if args.describe else cfg.to_text(), end="\n" if args.describe else "")
    return 0


# --- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--threads", type=int, help="thread cap (overrides run.threads)")
    common.add_argument("--up", choices=["z", "y"], help="up axis of input meshes (overrides mesh.up)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sphereproj", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sphereproj {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("project-depth", parents=[common], help="spherical depth map of a mesh")
    s.add_argument("mesh")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_project_depth)

    s = sub.add_parser("strips", parents=[common], help="latitude and vertical strips of a mesh or map")
    s.add_argument("input", help="mesh (.off/.obj) or depth map (.sphd)")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--direct", action="store_true", help="ray-cast strip samples instead of interpolating")
    s.set_defaults(func=cmd_strips)

    s = sub.add_parser("project-contour", parents=[common], help="multi-view montage of a mesh")
    s.add_argument("mesh")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_project_contour)

    s = sub.add_parser("dataset", parents=[common], help="manifest lifecycle")
    s.add_argument("action", choices=["gen", "ingest", "materialize"])
    s.add_argument("root", nargs="?", help="directory tree for ingest")
    s.add_argument("-o", "--output", help="manifest to write (gen, ingest)")
    s.add_argument("--manifest", help="manifest to materialize")
    s.add_argument("--cache", help="projection cache directory")
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", parents=[common], help="train a depth or contour network")
    s.add_argument("kind", choices=["depth", "contour"])
    s.add_argument("--manifest", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--cache")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="accuracy of one model or a fused pair")
    s.add_argument("--model", required=True, help="model file, or two comma-separated for fusion")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", default="test", choices=["train", "test"])
    s.add_argument("--cache")
    s.add_argument("-o", "--output", help="directory for report.txt")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("predict", parents=[common], help="ranked class probabilities for one mesh")
    s.add_argument("--model", required=True, help="model file, or two comma-separated for fusion")
    s.add_argument("mesh")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("selftest", parents=[common], help="quick oracle checks")
    s.set_defaults(func=cmd_selftest)

    s = sub.add_parser("config", parents=[common], help="print the effective config")
    s.add_argument("--describe", action="store_true", help="list every key with default and meaning")
    s.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
        if args.threads is not None:
            cfg.set("run.threads", args.threads)
        if args.up is not None:
            cfg.set("mesh.up", args.up)
        set_threads(cfg.int("run.threads"))
        if args.command == "dataset":
            need = {"gen": "output", "ingest": "output", "materialize": "manifest"}[args.action]
            if not getattr(args, need) or (args.action == "ingest" and not args.root):
                raise ConfigError(f"dataset {args.action} needs --{need}" + (" and a root" if args.action == "ingest" else ""))
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
