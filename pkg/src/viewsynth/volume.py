"""Scalar CT volumes: data model, raw+JSON file format, preprocessing, phantoms.

Arrays are indexed ``(z, y, x)``; ``spacing`` and ``origin`` follow the same
order.  Physical (world) coordinates used by the geometry module are
``(x, y, z)`` in mm, with ``z`` the patient axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "Volume",
    "Ellipsoid",
    "PhantomSpec",
    "load_volume",
    "save_volume",
    "hu_to_attenuation",
    "resample_z",
    "resize_xy",
    "pad_z",
    "make_phantom",
    "load_phantom_spec",
    "random_phantom_spec",
]

MU_WATER = 0.02  # 1/mm


def _triple(values, name, kind=float):
    out = tuple(kind(v) for v in values)
    if len(out) != 3:
        raise ValueError(f"{name} must have 3 entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class Grid:
    """Voxel grid metadata shared by scalar and feature volumes."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "dims", _triple(self.dims, "dims", int))
        object.__setattr__(self, "spacing", _triple(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _triple(self.origin, "origin"))
        if min(self.dims) < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if not all(math.isfinite(s) and s > 0 for s in self.spacing):
            raise ValueError(f"spacing must be strictly positive, got {self.spacing}")
        if not all(math.isfinite(o) for o in self.origin):
            raise ValueError(f"origin must be finite, got {self.origin}")

    @classmethod
    def centered(cls, dims, spacing) -> "Grid":
        """Grid whose center sits at the isocenter (world origin)."""
        dims = _triple(dims, "dims", int)
        spacing = _triple(spacing, "spacing")
        origin = tuple(-(n - 1) / 2.0 * s for n, s in zip(dims, spacing))
        return cls(dims, spacing, origin)

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def bounds_xyz(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical bounding box ``(lo, hi)`` in world ``(x, y, z)`` order."""
        sp = np.array(self.spacing[::-1])
        org = np.array(self.origin[::-1])
        n = np.array(self.dims[::-1])
        return org - sp / 2, org + (n - 1) * sp + sp / 2

    def center_zyx(self) -> np.ndarray:
        return np.array(self.origin) + (np.array(self.dims) - 1) / 2.0 * np.array(self.spacing)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Voxel-center coordinates (mm) along array axis 0, 1 or 2."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing": list(self.spacing), "origin": list(self.origin)}


@dataclass
class Volume:
    """Scalar attenuation volume (1/mm), stored as float32."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D (z, y, x), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume contains non-finite values")
        self.data = data
        if self.origin is None:
            grid = Grid.centered(data.shape, self.spacing)
        else:
            grid = Grid(data.shape, self.spacing, self.origin)
        self.spacing = grid.spacing
        self.origin = grid.origin

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def grid(self) -> Grid:
        return Grid(self.dims, self.spacing, self.origin)

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.origin == other.origin
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def split_stem(path) -> Path:
    """Strip a ``.json``/``.raw`` suffix so either file of the pair can be named."""
    path = Path(path)
    if path.suffix in (".json", ".raw"):
        path = path.with_suffix("")
    return path


def write_raw_pair(path, header: dict, data: np.ndarray) -> None:
    stem = split_stem(path)
    header = dict(header, dtype="float32", endianness="little")
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    stem.with_suffix(".raw").write_bytes(payload)
    stem.with_suffix(".json").write_text(json.dumps(header, indent=2) + "\n")


def read_raw_pair(path, shape_key) -> tuple[dict, np.ndarray]:
    stem = split_stem(path)
    hdr_path, raw_path = stem.with_suffix(".json"), stem.with_suffix(".raw")
    for p in (hdr_path, raw_path):
        if not p.is_file():
            raise FileNotFoundError(f"missing file: {p}")
    header = json.loads(hdr_path.read_text())
    if header.get("dtype", "float32") != "float32":
        raise ValueError(f"unsupported dtype {header['dtype']!r}")
    order = "<" if header.get("endianness", "little") == "little" else ">"
    shape = tuple(int(n) for n in shape_key(header))
    raw = raw_path.read_bytes()
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise ValueError(
            f"size mismatch: header implies {expected // 4} values, raw holds {len(raw) / 4:g}"
        )
    data = np.frombuffer(raw, dtype=f"{order}f4").reshape(shape).astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"non-finite values in {raw_path}")
    return header, data


def save_volume(volume: Volume, path) -> None:
    """Write ``<name>.json`` + ``<name>.raw`` (little-endian float32)."""
    header = {"schema": 1, "kind": "volume", **volume.grid.to_dict()}
    write_raw_pair(path, header, volume.data)


def load_volume(path) -> Volume:
    header, data = read_raw_pair(path, lambda h: h["dims"])
    return Volume(data, spacing=tuple(header["spacing"]), origin=tuple(header["origin"]))


# --------------------------------------------------------------------------
# Preprocessing
# --------------------------------------------------------------------------


def hu_to_attenuation(volume: Volume, mu_water: float = MU_WATER) -> Volume:
    """Convert Hounsfield units to linear attenuation, clamping negatives to 0."""
    if not mu_water > 0:
        raise ValueError(f"mu_water must be positive, got {mu_water}")
    hu = volume.data.astype(np.float64)
    mu = np.maximum(mu_water * (1.0 + hu / 1000.0), 0.0)
    return Volume(mu, volume.spacing, volume.origin)


def _linear_resample_axis(data: np.ndarray, axis: int, positions: np.ndarray) -> np.ndarray:
    """Linear interpolation along ``axis`` at fractional indices, edge-clamped."""
    n = data.shape[axis]
    pos = np.clip(positions, 0.0, n - 1)
    i0 = np.floor(pos).astype(np.intp)
    i0 = np.minimum(i0, max(n - 2, 0))
    i1 = np.minimum(i0 + 1, n - 1)
    w = pos - i0
    shape = [1] * data.ndim
    shape[axis] = -1
    w = w.reshape(shape)
    a = np.take(data, i0, axis=axis)
    b = np.take(data, i1, axis=axis)
    return a * (1.0 - w) + b * w


def _rescaled_axis(grid: Grid, axis: int, new_n: int, new_s: float):
    """Fractional source indices and new origin for a center-preserving regrid."""
    center = grid.center_zyx()[axis]
    new_origin = center - (new_n - 1) / 2.0 * new_s
    coords = new_origin + new_s * np.arange(new_n)
    return (coords - grid.origin[axis]) / grid.spacing[axis], new_origin


def resample_z(volume: Volume, target_sz: float) -> Volume:
    """Linearly resample along z to slice spacing ``target_sz`` (mm)."""
    if not target_sz > 0:
        raise ValueError(f"target_sz must be positive, got {target_sz}")
    grid = volume.grid
    new_d = int(round(grid.dims[0] * grid.spacing[0] / target_sz))
    if new_d < 1:
        raise ValueError(f"resampling to {target_sz} mm leaves no slices")
    pos, oz = _rescaled_axis(grid, 0, new_d, float(target_sz))
    data = _linear_resample_axis(volume.data.astype(np.float64), 0, pos)
    spacing = (float(target_sz), grid.spacing[1], grid.spacing[2])
    return Volume(data, spacing, (oz, grid.origin[1], grid.origin[2]))


def resize_xy(volume: Volume, target: tuple[int, int]) -> Volume:
    """Bilinear resize of every axial slice to ``target = (H, W)``.

    Spacing is rescaled so the physical xy extent is unchanged.
    """
    h, w = (int(t) for t in target)
    if h < 1 or w < 1:
        raise ValueError(f"target size must be >= (1, 1), got {target}")
    grid = volume.grid
    sy = grid.spacing[1] * grid.dims[1] / h
    sx = grid.spacing[2] * grid.dims[2] / w
    pos_y, oy = _rescaled_axis(grid, 1, h, sy)
    pos_x, ox = _rescaled_axis(grid, 2, w, sx)
    data = volume.data.astype(np.float64)
    data = _linear_resample_axis(data, 1, pos_y)
    data = _linear_resample_axis(data, 2, pos_x)
    return Volume(data, (grid.spacing[0], sy, sx), (grid.origin[0], oy, ox))


def pad_z(volume: Volume, target_d: int, fill: float = 0.0) -> Volume:
    """Pad symmetrically in z to ``target_d`` slices; odd remainder goes high."""
    d = volume.dims[0]
    if target_d < d:
        raise ValueError(f"target depth {target_d} is smaller than current depth {d}")
    low = (target_d - d) // 2
    high = target_d - d - low
    data = np.pad(volume.data, ((low, high), (0, 0), (0, 0)), constant_values=fill)
    oz = volume.origin[0] - low * volume.spacing[0]
    return Volume(data, volume.spacing, (oz, volume.origin[1], volume.origin[2]))


# --------------------------------------------------------------------------
# Phantoms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ellipsoid:
    """Ellipsoid in world coordinates; ``center`` and ``semi_axes`` are (x, y, z) mm."""

    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]
    attenuation: float
    rotation_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", _triple(self.center, "center"))
        object.__setattr__(self, "semi_axes", _triple(self.semi_axes, "semi_axes"))
        if not all(a > 0 and math.isfinite(a) for a in self.semi_axes):
            raise ValueError(f"semi-axes must be strictly positive, got {self.semi_axes}")
        if not math.isfinite(self.attenuation) or not math.isfinite(self.rotation_deg):
            raise ValueError("ellipsoid attenuation and rotation must be finite")


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    background: float = 0.0
    ellipsoids: tuple[Ellipsoid, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "ellipsoids", tuple(self.ellipsoids))
        Grid.centered(self.dims, self.spacing)  # validates
        if not math.isfinite(self.background):
            raise ValueError("background attenuation must be finite")

    @classmethod
    def from_dict(cls, doc: dict) -> "PhantomSpec":
        if doc.get("schema", 1) != 1:
            raise ValueError(f"unsupported phantom schema {doc.get('schema')!r}")
        ellipsoids = [
            Ellipsoid(
                center=e["center"],
                semi_axes=e["semi_axes"],
                attenuation=float(e["attenuation"]),
                rotation_deg=float(e.get("rotation_deg", 0.0)),
            )
            for e in doc.get("ellipsoids", [])
        ]
        return cls(
            dims=tuple(doc["dims"]),
            spacing=tuple(doc.get("spacing", (1.0, 1.0, 1.0))),
            background=float(doc.get("background", 0.0)),
            ellipsoids=tuple(ellipsoids),
        )

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "background": self.background,
            "ellipsoids": [
                {
                    "center": list(e.center),
                    "semi_axes": list(e.semi_axes),
                    "attenuation": e.attenuation,
                    "rotation_deg": e.rotation_deg,
                }
                for e in self.ellipsoids
            ],
        }


def load_phantom_spec(path) -> PhantomSpec:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing phantom spec: {path}")
    return PhantomSpec.from_dict(json.loads(path.read_text()))


def make_phantom(spec: PhantomSpec) -> Volume:
    """Rasterize ellipsoids by voxel-center membership on a centered grid."""
    grid = Grid.centered(spec.dims, spec.spacing)
    z = grid.axis_coords(0)[:, None, None]
    y = grid.axis_coords(1)[None, :, None]
    x = grid.axis_coords(2)[None, None, :]
    out = np.full(grid.dims, spec.background, dtype=np.float64)
    for e in spec.ellipsoids:
        th = math.radians(e.rotation_deg)
        c, s = math.cos(th), math.sin(th)
        dx, dy, dz = x - e.center[0], y - e.center[1], z - e.center[2]
        # body-frame coordinates: rotate world offsets by -theta about z
        u = c * dx + s * dy
        v = -s * dx + c * dy
        ax, ay, az = e.semi_axes
        inside = (u / ax) ** 2 + (v / ay) ** 2 + (dz / az) ** 2 <= 1.0
        out += np.where(inside, e.attenuation, 0.0)
    return Volume(out, grid.spacing, grid.origin)


def random_phantom_spec(
    rng: np.random.Generator,
    dims=(128, 128, 128),
    spacing=(1.5, 1.5, 1.5),
    n_ellipsoids: int = 3,
    mu_range=(0.005, 0.02),
) -> PhantomSpec:
    """Seeded random ellipsoids kept well inside the grid's field of view."""
    grid = Grid.centered(dims, spacing)
    half = (np.array(grid.dims) * np.array(grid.spacing) / 2.0)[::-1]  # x, y, z
    ellipsoids = []
    for _ in range(n_ellipsoids):
        axes = rng.uniform(0.12, 0.35, size=3) * half
        center = rng.uniform(-0.4, 0.4, size=3) * (half - axes)
        ellipsoids.append(
            Ellipsoid(
                center=tuple(float(c) for c in center),
                semi_axes=tuple(float(a) for a in axes),
                attenuation=float(rng.uniform(*mu_range)),
                rotation_deg=float(rng.uniform(0.0, 180.0)),
            )
        )
    return PhantomSpec(dims=grid.dims, spacing=grid.spacing, ellipsoids=tuple(ellipsoids))
