"""Run configuration for the ``synthesize`` and ``bench`` commands.

Example (paths are relative to the config file)::

    {
      "schema": 1,
      "geometry": "geometry.json",
      "phantom": {"random": {"seed": 0, "n_ellipsoids": 3}},
      "stages": {"encoder": "identity", "refiner": "identity",
                 "generator": "passthrough"},
      "sources": [{"angle": 0}, {"angle": 90}],
      "target_angles": [30, 60],
      "output_dir": "out"
    }

Sources either name a projection file (``{"path": ...}``) or, when a phantom
is given, only an angle and are rendered from the phantom.  Ground-truth
targets come from ``truth`` entries or are rendered from the phantom.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import ConeBeamGeometry, default_geometry, load_geometry
from .losses import LossWeights
from .projector import Projection, forward_project, load_projection, normalize_unit
from .synthesis import OUTPUT_MODES, encoder_from_key, generator_from_key
from .transform import refiner_from_key
from .volume import (
    Grid,
    Volume,
    load_phantom_spec,
    load_volume,
    make_phantom,
    random_phantom_spec,
)

__all__ = ["RunConfig", "load_run_config", "PreparedRun", "prepare_run"]

_KNOWN = {
    "schema", "geometry", "binning", "grid", "stages", "loss_weights", "step", "phantom",
    "sources", "target_angles", "truth", "output_dir", "normalize_inputs", "output", "pgm",
}


@dataclass
class RunConfig:
    base_dir: Path
    geometry: str | None = None
    binning: int = 1
    grid: dict | None = None
    stages: dict = field(default_factory=lambda: {"encoder": "identity", "refiner": "identity", "generator": "passthrough"})
    loss_weights: LossWeights = field(default_factory=LossWeights)
    step: float | None = None
    phantom: dict | None = None
    sources: list = field(default_factory=list)
    target_angles: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    output_dir: str = "out"
    normalize_inputs: bool = True
    output: str = "minmax"
    pgm: bool = False

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "RunConfig":
        if doc.get("schema") != 1:
            raise ValueError(f"run config must declare \"schema\": 1, got {doc.get('schema')!r}")
        unknown = set(doc) - _KNOWN
        if unknown:
            raise ValueError(f"unknown run config fields: {sorted(unknown)}")
        kw = {k: doc[k] for k in _KNOWN - {"schema", "loss_weights", "stages"} if k in doc}
        cfg = cls(base_dir=Path(base_dir), **kw)
        if "stages" in doc:
            cfg.stages = {**cfg.stages, **doc["stages"]}
        if "loss_weights" in doc:
            cfg.loss_weights = LossWeights(**doc["loss_weights"])
        if not cfg.sources:
            raise ValueError("run config needs a non-empty 'sources' list")
        if not cfg.target_angles:
            raise ValueError("run config needs a non-empty 'target_angles' list")
        if cfg.output not in OUTPUT_MODES:
            raise ValueError(f"'output' must be one of {OUTPUT_MODES}")
        return cfg

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing run config: {path}")
    return RunConfig.from_dict(json.loads(path.read_text()), base_dir=path.parent)


@dataclass
class PreparedRun:
    """Everything needed to call :func:`viewsynth.synthesis.synthesize`."""

    config: RunConfig
    geometry: ConeBeamGeometry
    grid: Grid
    sources: list[Projection]
    target_angles: list[float]
    truths: dict[float, Projection]
    encoder: object
    refiner: object
    generator: object

    @property
    def output_dir(self) -> Path:
        return self.config.resolve(self.config.output_dir)

    def synthesize_kwargs(self) -> dict:
        return dict(
            encoder=self.encoder, refiner=self.refiner, generator=self.generator,
            geometry=self.geometry, grid=self.grid, step=self.config.step,
            output=self.config.output,
        )


def _phantom_volume(cfg: RunConfig) -> Volume | None:
    ph = cfg.phantom
    if ph is None:
        return None
    if "volume" in ph:
        return load_volume(cfg.resolve(ph["volume"]))
    if "spec" in ph:
        return make_phantom(load_phantom_spec(cfg.resolve(ph["spec"])))
    if "random" in ph:
        opts = dict(ph["random"])
        rng = np.random.default_rng(int(opts.pop("seed", 0)))
        if "dims" in opts:
            opts["dims"] = tuple(opts["dims"])
        if "spacing" in opts:
            opts["spacing"] = tuple(opts["spacing"])
        return make_phantom(random_phantom_spec(rng, **opts))
    raise ValueError("phantom must give one of 'volume', 'spec' or 'random'")


def prepare_run(cfg: RunConfig) -> PreparedRun:
    geom = load_geometry(cfg.resolve(cfg.geometry)) if cfg.geometry else default_geometry()
    if cfg.binning != 1:
        geom = geom.binned(int(cfg.binning))
    volume = _phantom_volume(cfg)

    if cfg.grid is not None:
        g = cfg.grid
        if g.get("origin") is None:
            grid = Grid.centered(g["dims"], g["spacing"])
        else:
            grid = Grid(g["dims"], g["spacing"], g["origin"])
    elif volume is not None:
        grid = volume.grid
    else:
        raise ValueError("run config needs a 'grid' when no phantom is given")

    prep = (lambda p: normalize_unit(p)) if cfg.normalize_inputs else (lambda p: p)

    def render(angle):
        if volume is None:
            raise ValueError(f"no file given for view at {angle} deg and no phantom to render it")
        return forward_project(volume, geom, float(angle), cfg.step)

    sources = []
    for entry in cfg.sources:
        if "path" in entry:
            p = load_projection(cfg.resolve(entry["path"]))
            if "angle" in entry and float(entry["angle"]) != p.angle:
                raise ValueError(f"{entry['path']}: header angle {p.angle} != config angle {entry['angle']}")
            if p.geometry != geom:
                raise ValueError(f"{entry['path']}: projection geometry differs from run geometry")
        else:
            p = render(entry["angle"])
        sources.append(prep(p))

    targets = [float(a) for a in cfg.target_angles]
    truths = {}
    for entry in cfg.truth:
        p = load_projection(cfg.resolve(entry["path"]))
        truths[float(entry.get("angle", p.angle))] = prep(p)
    if volume is not None:
        for a in targets:
            if a not in truths:
                truths[a] = prep(render(a))

    st = cfg.stages
    return PreparedRun(
        config=cfg,
        geometry=geom,
        grid=grid,
        sources=sources,
        target_angles=targets,
        truths=truths,
        encoder=encoder_from_key(st["encoder"]),
        refiner=refiner_from_key(st["refiner"]),
        generator=generator_from_key(st["generator"]),
    )

