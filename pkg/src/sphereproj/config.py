"""Flat key=value run configuration.

Every key has a default; paper values are used wherever the paper gives one.
Unknown keys are rejected so that a typo never silently falls back to a
default.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .classifier import ContourNetConfig, DepthNetConfig, Schedule
from .dataset import ProjectionConfig
from .depth import GridConfig, LatStripConfig, VertStripConfig
from .mesh import SHAPE_KINDS
from .neural import SgdConfig, lr_grid

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    default: str
    kind: type
    doc: str


def _grid_text() -> str:
    return ",".join(f"{x:.6g}" for x in lr_grid())


KEYS: dict[str, Key] = {
    "grid.m": Key("90", int, "depth map rows (colatitude)"),
    "grid.n": Key("180", int, "depth map columns (azimuth)"),
    "lat.m_h": Key("240", int, "latitude strip rows"),
    "lat.n_h": Key("360", int, "latitude strip columns"),
    "lat.band_lo": Key("30", float, "latitude strip upper colatitude, degrees"),
    "lat.band_hi": Key("150", float, "latitude strip lower colatitude, degrees"),
    "vert.n_v": Key("180", int, "vertical strip samples along the meridian"),
    "vert.m_v": Key("60", int, "vertical strip samples across"),
    "vert.l_v": Key("12", int, "number of vertical strips"),
    "vert.half_width": Key("15", float, "vertical strip half width, degrees"),
    "strips.downsample": Key("2", int, "block-mean factor applied to strips before the network"),
    "mesh.up": Key("z", str, "up axis of input files: z, or y to permute y-up sources"),
    "sphere.radius_rule": Key("aabb", str, "aabb: 3 x box diagonal; upright: rotation-invariant variant"),
    "octree.max_depth": Key("10", int, "octree depth limit"),
    "octree.leaf_target": Key("16", int, "triangles per leaf before splitting"),
    "contour.views_per_ring": Key("12", int, "cameras per elevation ring"),
    "contour.view_size": Key("224", int, "pixels per square view"),
    "contour.silhouette": Key("false", bool, "render flat silhouettes instead of shaded views"),
    "depthnet.channels": Key("8,16,32", tuple, "conv channels per layer, both branches"),
    "depthnet.kernel": Key("3", int, "conv kernel size"),
    "depthnet.lat_pools": Key("2,3;2,5;2,1", tuple, "latitude pools (rows,cols) per layer"),
    "depthnet.vert_pools": Key("2,2;2,2;2,2", tuple, "vertical pools (rows,cols) per layer"),
    "depthnet.feature": Key("64", int, "per-position feature width"),
    "depthnet.activation": Key("relu", str, "cyclic layer activation: relu or identity"),
    "contournet.crop_fraction": Key("0.5", float, "central fraction of each view fed to the network (1 = all)"),
    "contournet.channels": Key("4,8,16", tuple, "conv channels per layer"),
    "contournet.kernel": Key("3", int, "conv kernel size"),
    "contournet.first_stride": Key("1", int, "stride of the first conv"),
    "contournet.pools": Key("2,2;2,2;2,2", tuple, "pools (rows,cols) per layer"),
    "contournet.feature": Key("64", int, "per-position feature width"),
    "contournet.activation": Key("relu", str, "cyclic layer activation"),
    "sgd.lr": Key("0.001", float, "base learning rate (a point of sgd.lr_grid)"),
    "sgd.momentum": Key("0.9", float, "momentum"),
    "sgd.weight_decay": Key("0.0005", float, "L2 weight decay (biases exempt)"),
    "sgd.batch_size": Key("32", int, "mini-batch size"),
    "sgd.lr_grid": Key(_grid_text(), tuple, "learning rates for a manual sweep"),
    "sgd.lr_step": Key("0", int, "epochs between learning-rate drops, 0 = constant"),
    "sgd.lr_gamma": Key("0.1", float, "learning-rate drop factor"),
    "sgd.fresh_lr_mult": Key("10", float, "learning-rate multiplier for freshly initialised layers"),
    "train.epochs_vert": Key("3", int, "stage 1 epochs (vertical branch)"),
    "train.epochs_lat": Key("3", int, "stage 2 epochs (latitude branch)"),
    "train.epochs_joint": Key("2", int, "stage 3 epochs (joint)"),
    "train.epochs_contour": Key("4", int, "contour network epochs"),
    "train.head_warmup": Key("20", int, "passes fitting the fresh joint head on frozen features"),
    "train.seed": Key("0", int, "initialisation and shuffling seed"),
    "data.seed": Key("0", int, "synthetic dataset seed"),
    "data.classes": Key(",".join(SHAPE_KINDS), tuple, "synthetic shape classes"),
    "data.train_per_class": Key("200", int, "synthetic training meshes per class"),
    "data.test_per_class": Key("50", int, "synthetic test meshes per class"),
    "data.cache_dir": Key("cache", str, "projection cache directory"),
    "run.threads": Key("0", int, "thread cap for all parallel stages, 0 = all cores"),
}


def _check(key: str, value: str) -> str:
    spec = KEYS[key]
    try:
        if spec.kind is int:
            int(value)
        elif spec.kind is float:
            float(value)
        elif spec.kind is bool and value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


class RunConfig:
    def __init__(self, values: dict[str, str] | None = None):
        self._v = {k: s.default for k, s in KEYS.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in KEYS:
            raise ConfigError(f"unknown key: {key}")
        self._v[key] = _check(key, str(value).strip())

    def get(self, key: str) -> str:
        return self._v[key]

    def int(self, key: str) -> int:
        return int(self._v[key])

    def float(self, key: str) -> float:
        return float(self._v[key])

    def bool(self, key: str) -> bool:
        return self._v[key].lower() in ("true", "1", "yes")

    def ints(self, key: str) -> tuple[int, ...]:
        return tuple(int(x) for x in self._v[key].split(","))

    def pairs(self, key: str) -> tuple[tuple[int, int], ...]:
        return tuple(tuple(int(x) for x in p.split(",")) for p in self._v[key].split(";"))

    def as_dict(self) -> dict[str, str]:
        return dict(self._v)

    def override(self, assignments) -> "RunConfig":
        """Apply ``key=value`` strings on top of this config (logged)."""
        out = RunConfig(self._v)
        for a in assignments or ():
            key, sep, value = a.partition("=")
            if not sep:
                raise ConfigError(f"expected key=value, got {a!r}")
            log.info("override %s=%s (was %s)", key.strip(), value.strip(), out._v.get(key.strip(), "unset"))
            out.set(key.strip(), value)
        return out

    # --- text form ---------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"# sphereproj {__version__} effective config"]
        lines += [f"{k}={self._v[k]}" for k in sorted(self._v)]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256("".join(f"{k}={self._v[k]}\n" for k in sorted(self._v)).encode()).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str, strict: bool = True) -> "RunConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}: expected key=value")
            key = key.strip()
            if key not in KEYS and not strict:
                continue
            cfg.set(key, value)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    # --- typed views -------------------------------------------------------

    def projection(self) -> ProjectionConfig:
        return ProjectionConfig(
            grid=GridConfig(self.int("grid.m"), self.int("grid.n")),
            lat=LatStripConfig(self.int("lat.m_h"), self.int("lat.n_h"),
                               (self.float("lat.band_lo"), self.float("lat.band_hi"))),
            vert=VertStripConfig(self.int("vert.n_v"), self.int("vert.m_v"), self.int("vert.l_v"),
                                 self.float("vert.half_width")),
            strip_downsample=self.int("strips.downsample"),
            views_per_ring=self.int("contour.views_per_ring"),
            view_size=self.int("contour.view_size"),
            radius_rule=self.get("sphere.radius_rule"),
            silhouette=self.bool("contour.silhouette"),
            up=self.get("mesh.up"),
        )

    def depthnet(self) -> DepthNetConfig:
        f = self.int("strips.downsample")
        return DepthNetConfig(
            lat_size=(self.int("lat.m_h") // f, self.int("lat.n_h") // f),
            vert_size=(self.int("vert.n_v") // f, self.int("vert.m_v") // f),
            l_v=self.int("vert.l_v"),
            channels=self.ints("depthnet.channels"),
            kernel=self.int("depthnet.kernel"),
            lat_pools=self.pairs("depthnet.lat_pools"),
            vert_pools=self.pairs("depthnet.vert_pools"),
            feature=self.int("depthnet.feature"),
            activation=self.get("depthnet.activation"),
        )

    def contournet(self) -> ContourNetConfig:
        size = self.int("contour.view_size")
        frac = self.float("contournet.crop_fraction")
        crop = 0 if frac >= 1 else int(round(size * frac / 2)) * 2
        return ContourNetConfig(
            views_per_ring=self.int("contour.views_per_ring"),
            view_size=size,
            crop=crop if (size - crop) % 2 == 0 else crop + 1,
            channels=self.ints("contournet.channels"),
            kernel=self.int("contournet.kernel"),
            first_stride=self.int("contournet.first_stride"),
            pools=self.pairs("contournet.pools"),
            feature=self.int("contournet.feature"),
            activation=self.get("contournet.activation"),
        )

    def sgd(self) -> SgdConfig:
        return SgdConfig(self.float("sgd.lr"), self.float("sgd.momentum"), self.float("sgd.weight_decay"),
                         self.int("sgd.batch_size"), tuple(float(x) for x in self.get("sgd.lr_grid").split(",")))

    def schedule(self) -> Schedule:
        return Schedule(
            epochs_vert=self.int("train.epochs_vert"),
            epochs_lat=self.int("train.epochs_lat"),
            epochs_joint=self.int("train.epochs_joint"),
            epochs_contour=self.int("train.epochs_contour"),
            lr_step=self.int("sgd.lr_step"),
            lr_gamma=self.float("sgd.lr_gamma"),
            fresh_lr_mult=self.float("sgd.fresh_lr_mult"),
            head_warmup=self.int("train.head_warmup"),
        )


def describe() -> str:
    """Documented defaults, one key per line."""
    w = max(len(k) for k in KEYS)
    return "\n".join(f"{k:<{w}}  {s.default:<14}  {s.doc}" for k, s in KEYS.items())


def set_threads(n: int) -> int:
    """Cap numba and BLAS threads; 0 means every core. Returns the cap used."""
    import os

    import numba
    from threadpoolctl import threadpool_limits

    n = n if n > 0 else (os.cpu_count() or 1)
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    threadpool_limits(n)
    return n
