"""End-to-end novel-view synthesis: encode, transform, generate.

The encoder splits a projection into a geometry feature map (kept on the
detector grid so it can be back-projected) and a fixed-length texture code.
The generator turns a transformed geometry map plus texture code back into
an image.  The shipped stages are analytic references; learned stages plug
in behind the same two protocols.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .geometry import ConeBeamGeometry
from .projector import Projection, normalize_unit
from .transform import ContractError, Refiner, TransformPlan, timed, transform_projections
from .volume import Grid

__all__ = [
    "Encoder",
    "Generator",
    "IdentityEncoder",
    "PassthroughGenerator",
    "identity_encoder",
    "passthrough_generator",
    "encoder_from_key",
    "generator_from_key",
    "SynthesisResult",
    "OUTPUT_MODES",
    "synthesize",
]

OUTPUT_MODES = ("minmax", "clamp")


class Encoder(Protocol):
    def encode(self, projection: Projection) -> tuple[Projection, np.ndarray]: ...


class Generator(Protocol):
    def generate(self, geometry_features: Projection, texture: np.ndarray) -> Projection: ...


class IdentityEncoder:
    """Geometry features are the image itself; texture is ``[mean, std]``."""

    def encode(self, projection):
        data = projection.data
        return projection, np.array([data.mean(), data.std()])


class PassthroughGenerator:
    """Re-standardize channel 0 of the geometry map to the texture moments."""

    def generate(self, geometry_features, texture):
        f = geometry_features.data[0]
        mean, std = float(texture[0]), float(texture[1])
        spread = f.std()
        if spread > 0:
            out = (f - f.mean()) / spread * std + mean
        else:
            out = np.full_like(f, mean)
        return geometry_features.with_data(np.clip(out, 0.0, 1.0)[None])


def identity_encoder() -> IdentityEncoder:
    return IdentityEncoder()


def passthrough_generator() -> PassthroughGenerator:
    return PassthroughGenerator()


_ENCODERS = {"identity": identity_encoder}
_GENERATORS = {"passthrough": passthrough_generator}


def encoder_from_key(key: str) -> Encoder:
    try:
        return _ENCODERS[key]()
    except KeyError:
        raise ValueError(f"unknown encoder {key!r}") from None


def generator_from_key(key: str) -> Generator:
    try:
        return _GENERATORS[key]()
    except KeyError:
        raise ValueError(f"unknown generator {key!r}") from None


@dataclass
class SynthesisResult:
    sources: list[Projection]
    targets: list[Projection]
    texture: np.ndarray
    source_features: list[Projection]
    target_features: list[Projection]

    def __iter__(self):
        # allows ``src, tgt = synthesize(...)``
        return iter((self.sources, self.targets))


def _check_encoded(projection, encoded, n_texture):
    fg, ft = encoded
    ft = np.asarray(ft, dtype=np.float64)
    if not isinstance(fg, Projection) or fg.data.shape[1:] != projection.data.shape[1:]:
        raise ContractError("encoder geometry features must keep the detector shape")
    if ft.ndim != 1 or not np.all(np.isfinite(ft)):
        raise ContractError("encoder texture code must be a finite vector")
    if n_texture is not None and ft.size != n_texture:
        raise ContractError(f"texture length changed between sources: {n_texture} vs {ft.size}")
    return fg, ft


def _check_generated(features, out):
    if not isinstance(out, Projection) or out.data.shape[1:] != features.data.shape[1:]:
        raise ContractError("generator output must match the feature map's detector shape")
    return out


def synthesize(
    sources: Sequence[Projection],
    target_angles: Sequence[float],
    encoder: Encoder,
    refiner: Refiner,
    generator: Generator,
    geometry: ConeBeamGeometry,
    grid: Grid,
    step: float | None = None,
    output: str = "minmax",
    profile: dict | None = None,
) -> SynthesisResult:
    """Synthesize every target view and re-synthesize every source view.

    Texture codes of multiple sources are averaged.  Generated images are
    clipped to [0, 1]; with ``output="minmax"`` (default) each is then
    min-max rescaled, the same normalization applied to rendered DRRs, and
    constant images map to 0.  When ``profile`` is a dict, per-stage wall
    times (seconds) are accumulated into it.
    """
    if output not in OUTPUT_MODES:
        raise ValueError(f"output must be one of {OUTPUT_MODES}, got {output!r}")
    sources = list(sources)
    if not sources:
        raise ValueError("need at least one source projection")
    if not list(target_angles):
        raise ValueError("need at least one target angle")

    with timed(profile, "encode"):
        geo_feats, textures = [], []
        for p in sources:
            fg, ft = _check_encoded(p, encoder.encode(p), textures[0].size if textures else None)
            geo_feats.append(fg)
            textures.append(ft)
        # fsum is exactly rounded, so the fused code ignores source order
        texture = np.array([math.fsum(col) / len(textures) for col in zip(*textures)])

    plan = TransformPlan(geo_feats, target_angles, geometry, grid, refiner, step)
    src_feats, tgt_feats = transform_projections(plan, profile)

    with timed(profile, "generate"):
        def gen(f):
            out = _check_generated(f, generator.generate(f, texture))
            out = out.with_data(np.clip(out.data, 0.0, 1.0))
            return normalize_unit(out) if output == "minmax" else out

        src_out = [gen(f) for f in src_feats]
        tgt_out = [gen(f) for f in tgt_feats]
    return SynthesisResult(src_out, tgt_out, texture, src_feats, tgt_feats)
