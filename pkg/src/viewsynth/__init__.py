"""Geometry-integrated novel-view X-ray projection synthesis."""

import os

import numba

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is too old for numba; skip probing it
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .geometry import ConeBeamGeometry, default_geometry, load_geometry  # noqa: E402
from .projector import (  # noqa: E402
    FeatureProjection,
    FeatureVolume,
    Projection,
    back_project,
    back_project_multi,
    forward_project,
    load_projection,
    save_projection,
)
from .volume import Grid, PhantomSpec, Volume, load_volume, make_phantom, save_volume  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ConeBeamGeometry",
    "FeatureProjection",
    "FeatureVolume",
    "Grid",
    "PhantomSpec",
    "Projection",
    "Volume",
    "back_project",
    "back_project_multi",
    "default_geometry",
    "forward_project",
    "load_geometry",
    "load_projection",
    "load_volume",
    "make_phantom",
    "save_projection",
    "save_volume",
]
