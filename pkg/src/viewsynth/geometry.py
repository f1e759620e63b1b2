"""Circular cone-beam geometry.

Conventions: the gantry rotates counter-clockwise about world +z.  At 0 deg
(AP) the source sits at ``(0, -sad, 0)`` and the flat detector is centered at
``(0, sdd - sad, 0)``.  Detector columns run along the rotated +x axis
``(cos a, sin a, 0)`` and rows along +z.  Angles are degrees everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .volume import Grid

__all__ = [
    "ConeBeamGeometry",
    "Ray",
    "default_geometry",
    "load_geometry",
    "source_position",
    "detector_frame",
    "detector_pixel_center",
    "detector_pixel_centers",
    "pixel_ray",
    "ray_box_intersection",
    "rotate_z",
]


@dataclass(frozen=True)
class ConeBeamGeometry:
    sad: float = 1000.0
    sdd: float = 1500.0
    det_rows: int = 180
    det_cols: int = 300
    pixel_pitch: tuple[float, float] = (2.0, 2.0)  # (pv, pu) mm
    det_offset: tuple[float, float] = (0.0, 0.0)  # (ov, ou) mm

    def __post_init__(self):
        object.__setattr__(self, "sad", float(self.sad))
        object.__setattr__(self, "sdd", float(self.sdd))
        object.__setattr__(self, "det_rows", int(self.det_rows))
        object.__setattr__(self, "det_cols", int(self.det_cols))
        object.__setattr__(self, "pixel_pitch", tuple(float(p) for p in self.pixel_pitch))
        object.__setattr__(self, "det_offset", tuple(float(o) for o in self.det_offset))
        if not (0 < self.sad < self.sdd and math.isfinite(self.sdd)):
            raise ValueError(f"need 0 < sad < sdd, got sad={self.sad}, sdd={self.sdd}")
        if self.det_rows < 1 or self.det_cols < 1:
            raise ValueError("detector must have at least one row and one column")
        if len(self.pixel_pitch) != 2 or min(self.pixel_pitch) <= 0:
            raise ValueError(f"pixel pitch must be two positive values, got {self.pixel_pitch}")
        if len(self.det_offset) != 2 or not all(map(math.isfinite, self.det_offset)):
            raise ValueError(f"detector offset must be two finite values, got {self.det_offset}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.det_rows, self.det_cols)

    def binned(self, factor: int) -> "ConeBeamGeometry":
        """Coarser detector covering the same area (``factor`` x ``factor`` binning)."""
        return replace(
            self,
            det_rows=max(1, self.det_rows // factor),
            det_cols=max(1, self.det_cols // factor),
            pixel_pitch=(self.pixel_pitch[0] * factor, self.pixel_pitch[1] * factor),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pixel_pitch"] = list(self.pixel_pitch)
        d["det_offset"] = list(self.det_offset)
        return {"schema": 1, **d}

    @classmethod
    def from_dict(cls, doc: dict) -> "ConeBeamGeometry":
        if doc.get("schema", 1) != 1:
            raise ValueError(f"unsupported geometry schema {doc.get('schema')!r}")
        keys = ("sad", "sdd", "det_rows", "det_cols", "pixel_pitch", "det_offset")
        unknown = set(doc) - set(keys) - {"schema"}
        if unknown:
            raise ValueError(f"unknown geometry fields: {sorted(unknown)}")
        return cls(**{k: doc[k] for k in keys if k in doc})


def default_geometry() -> ConeBeamGeometry:
    text = resources.files("viewsynth.data").joinpath("default_geometry.json").read_text()
    return ConeBeamGeometry.from_dict(json.loads(text))


def load_geometry(path) -> ConeBeamGeometry:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing geometry file: {path}")
    return ConeBeamGeometry.from_dict(json.loads(path.read_text()))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    @property
    def hits(self) -> bool:
        return self.t_near <= self.t_far


def rotate_z(points, angle: float) -> np.ndarray:
    """Rotate points ``(..., 3)`` counter-clockwise about +z by ``angle`` degrees."""
    th = math.radians(angle)
    c, s = math.cos(th), math.sin(th)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return np.asarray(points, dtype=np.float64) @ rot.T


def source_position(geom: ConeBeamGeometry, angle: float) -> np.ndarray:
    th = math.radians(angle)
    return np.array([geom.sad * math.sin(th), -geom.sad * math.cos(th), 0.0])


def detector_frame(geom: ConeBeamGeometry, angle: float):
    """Return ``(center, u_axis, v_axis)`` of the detector plane at ``angle``."""
    th = math.radians(angle)
    c, s = math.cos(th), math.sin(th)
    idd = geom.sdd - geom.sad
    center = np.array([-idd * s, idd * c, 0.0])
    u = np.array([c, s, 0.0])
    v = np.array([0.0, 0.0, 1.0])
    return center, u, v


def _pixel_offsets(geom: ConeBeamGeometry, rows, cols):
    pv, pu = geom.pixel_pitch
    ov, ou = geom.det_offset
    du = (np.asarray(cols, dtype=np.float64) - (geom.det_cols - 1) / 2.0) * pu + ou
    dv = (np.asarray(rows, dtype=np.float64) - (geom.det_rows - 1) / 2.0) * pv + ov
    return dv, du


def detector_pixel_center(geom: ConeBeamGeometry, angle: float, row: int, col: int) -> np.ndarray:
    if not (0 <= row < geom.det_rows and 0 <= col < geom.det_cols):
        raise IndexError(f"pixel ({row}, {col}) outside {geom.det_rows}x{geom.det_cols} detector")
    center, u, v = detector_frame(geom, angle)
    dv, du = _pixel_offsets(geom, row, col)
    return center + du * u + dv * v


def detector_pixel_centers(geom: ConeBeamGeometry, angle: float) -> np.ndarray:
    """All pixel centers, shape ``(rows, cols, 3)``."""
    center, u, v = detector_frame(geom, angle)
    dv, du = _pixel_offsets(geom, np.arange(geom.det_rows), np.arange(geom.det_cols))
    return center + du[None, :, None] * u + dv[:, None, None] * v


def ray_box_intersection(origin, directions, lo, hi):
    """Slab-method entry/exit parameters for rays ``origin + t * d``.

    ``directions`` is ``(..., 3)``.  A miss comes back as ``t_near > t_far``.
    """
    d = np.asarray(directions, dtype=np.float64)
    o = np.asarray(origin, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    # axis-parallel rays: inside the slab -> unbounded, outside -> empty
    parallel = d == 0.0
    inside = (o >= lo) & (o <= hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    t_near = np.maximum(np.max(tmin, axis=-1), 0.0)
    t_far = np.min(tmax, axis=-1)
    return t_near, t_far


def pixel_ray(geom: ConeBeamGeometry, angle: float, row: int, col: int, grid: Grid) -> Ray:
    src = source_position(geom, angle)
    pix = detector_pixel_center(geom, angle, row, col)
    d = pix - src
    d = d / np.linalg.norm(d)
    lo, hi = grid.bounds_xyz()
    t_near, t_far = ray_box_intersection(src, d, lo, hi)
    return Ray(src, d, float(t_near), float(t_far))


def ray_table(geom: ConeBeamGeometry, angle: float, grid: Grid):
    """Vectorized rays for every pixel, row-major.

    Returns ``(source, directions (R, 3), t_near (R,), t_far (R,))``.
    """
    src = source_position(geom, angle)
    d = detector_pixel_centers(geom, angle).reshape(-1, 3) - src
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    lo, hi = grid.bounds_xyz()
    t_near, t_far = ray_box_intersection(src, d, lo, hi)
    return src, d, t_near, t_far
