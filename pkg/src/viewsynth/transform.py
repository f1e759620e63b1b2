"""Projection transformation: back-project, refine in 3D, re-project.

Geometry features seen from the source views are lifted onto a 3D feature
volume, optionally refined there, and rendered again at every requested
angle.  Source-angle and target-angle outputs go through the same operator
path.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .geometry import ConeBeamGeometry
from .projector import FeatureVolume, Projection, back_project_multi, forward_project
from .volume import Grid

__all__ = [
    "ContractError",
    "Refiner",
    "IdentityRefiner",
    "SmoothingRefiner",
    "identity_refiner",
    "smoothing_refiner",
    "refiner_from_key",
    "TransformPlan",
    "transform_projections",
]


class ContractError(ValueError):
    """A pluggable stage returned something that breaks its interface."""


class Refiner(Protocol):
    def refine(self, volume: FeatureVolume) -> FeatureVolume: ...


class IdentityRefiner:
    def refine(self, volume: FeatureVolume) -> FeatureVolume:
        return volume

    def __repr__(self):
        return "IdentityRefiner()"


class SmoothingRefiner:
    """Separable Gaussian blur per channel; ``sigma`` in mm, truncated at 3 sigma."""

    def __init__(self, sigma: float):
        if not (sigma > 0 and math.isfinite(sigma)):
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    def refine(self, volume: FeatureVolume) -> FeatureVolume:
        data = volume.data
        for axis, spacing in zip((1, 2, 3), volume.grid.spacing):
            data = gaussian_filter1d(
                data, self.sigma / spacing, axis=axis, mode="nearest", truncate=3.0
            )
        return FeatureVolume(data, volume.grid)

    def __repr__(self):
        return f"SmoothingRefiner(sigma={self.sigma})"


def identity_refiner() -> IdentityRefiner:
    return IdentityRefiner()


def smoothing_refiner(sigma: float) -> SmoothingRefiner:
    return SmoothingRefiner(sigma)


def refiner_from_key(key: str) -> Refiner:
    """Registry lookup: ``"identity"`` or ``"smoothing:<sigma_mm>"``."""
    name, _, arg = key.partition(":")
    if name == "identity" and not arg:
        return identity_refiner()
    if name == "smoothing":
        try:
            sigma = float(arg)
        except ValueError:
            raise ValueError(f"bad smoothing sigma in refiner key {key!r}") from None
        return smoothing_refiner(sigma)
    raise ValueError(f"unknown refiner {key!r}")


@dataclass
class TransformPlan:
    sources: Sequence[Projection]
    target_angles: Sequence[float]
    geometry: ConeBeamGeometry
    grid: Grid
    refiner: Refiner = field(default_factory=IdentityRefiner)
    step: float | None = None

    def __post_init__(self):
        self.sources = list(self.sources)
        self.target_angles = [float(a) for a in self.target_angles]
        if not self.sources:
            raise ValueError("transform plan needs at least one source view")
        if not self.target_angles:
            raise ValueError("transform plan needs at least one target angle")
        angles = [p.angle for p in self.sources] + self.target_angles
        if not all(math.isfinite(a) for a in angles):
            raise ValueError("all angles must be finite")
        for p in self.sources:
            if p.geometry != self.geometry:
                raise ValueError(f"source at {p.angle} deg uses a different geometry")


def _check_refined(before: FeatureVolume, after) -> FeatureVolume:
    if not isinstance(after, FeatureVolume):
        raise ContractError(f"refiner returned {type(after).__name__}, expected FeatureVolume")
    if after.grid != before.grid or after.data.shape != before.data.shape:
        raise ContractError(
            f"refiner changed shape: {before.data.shape} {before.grid} -> "
            f"{after.data.shape} {after.grid}"
        )
    if not np.all(np.isfinite(after.data)):
        raise ContractError("refiner produced non-finite values")
    return after


@contextmanager
def timed(profile: dict | None, name: str):
    """Accumulate wall time of the block into ``profile[name]`` (seconds)."""
    t = time.perf_counter()
    try:
        yield
    finally:
        if profile is not None:
            profile[name] = profile.get(name, 0.0) + time.perf_counter() - t


def lift(plan: TransformPlan, profile: dict | None = None) -> FeatureVolume:
    """Back-project the sources and apply the refiner."""
    with timed(profile, "back_project"):
        volume = back_project_multi(plan.sources, plan.grid, plan.step)
    with timed(profile, "refine"):
        return _check_refined(volume, plan.refiner.refine(volume))


def transform_projections(
    plan: TransformPlan, profile: dict | None = None
) -> tuple[list[Projection], list[Projection]]:
    """Return ``(re-projected source views, target views)``."""
    volume = lift(plan, profile)
    with timed(profile, "forward_project"):
        render = lambda a: forward_project(volume, plan.geometry, a, plan.step)  # noqa: E731
        src = [render(p.angle) for p in plan.sources]
        tgt = [render(a) for a in plan.target_angles]
    return src, tgt
