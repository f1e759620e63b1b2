"""Matched ray-driven forward projector and its exact transpose.

Each detector pixel casts one ray from the source.  The ray is sampled at
``t_near + (k + 1/2) * step`` and the volume is trilinearly interpolated at
every sample (edge-clamped inside the bounding box, zero outside).  The
back-projector scatters with the very same weights, so the pair satisfies
``<A x, y> == <x, A^T y>`` up to rounding.

Both kernels are deterministic for any thread count: the forward kernel is
parallel over rays with no shared writes, and the back-projection kernel is
parallel over z-slices, each slice visiting rays and samples in a fixed order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .geometry import ConeBeamGeometry, ray_table
from .volume import Grid, Volume, read_raw_pair, write_raw_pair

__all__ = [
    "FeatureVolume",
    "Projection",
    "FeatureProjection",
    "default_step",
    "forward_project",
    "back_project",
    "back_project_multi",
    "normalize_unit",
    "save_projection",
    "load_projection",
    "write_pgm",
    "read_pgm",
    "projection_stem",
]


@dataclass
class FeatureVolume:
    """C-channel volume, ``data`` shaped ``(C, D, H, W)``."""

    data: np.ndarray
    grid: Grid

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 3:
            data = data[None]
        if data.ndim != 4:
            raise ValueError(f"feature volume must be (C, D, H, W), got {data.shape}")
        if data.shape[1:] != self.grid.dims:
            raise ValueError(f"data shape {data.shape[1:]} does not match grid {self.grid.dims}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature volume contains non-finite values")
        self.data = np.ascontiguousarray(data)

    @classmethod
    def from_volume(cls, volume: Volume) -> "FeatureVolume":
        return cls(volume.data.astype(np.float64)[None], volume.grid)

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass
class Projection:
    """Detector image(s) at one gantry angle, ``data`` shaped ``(C, rows, cols)``."""

    data: np.ndarray
    angle: float
    geometry: ConeBeamGeometry

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[1:] != self.geometry.shape:
            raise ValueError(
                f"projection shape {data.shape} does not match detector {self.geometry.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("projection contains non-finite values")
        self.data = np.ascontiguousarray(data)
        self.angle = float(self.angle)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def with_data(self, data) -> "Projection":
        return Projection(data, self.angle, self.geometry)


FeatureProjection = Projection


def default_step(grid: Grid) -> float:
    return 0.5 * min(grid.spacing)


# --------------------------------------------------------------------------
# Kernels
# --------------------------------------------------------------------------


@numba.njit(inline="always")
def _axis_weight(f, n):
    """Edge-clamped linear interpolation: lower index and upper weight."""
    if f < 0.0:
        f = 0.0
    elif f > n - 1:
        f = n - 1.0
    if n == 1:
        return 0, 0, 0.0
    i0 = int(np.floor(f))
    if i0 > n - 2:
        i0 = n - 2
    return i0, i0 + 1, f - i0


@numba.njit(inline="always")
def _sample_index(src, d, t, org, sp):
    # world (x, y, z) -> fractional voxel indices (fz, fy, fx)
    fx = (src[0] + t * d[0] - org[2]) / sp[2]
    fy = (src[1] + t * d[1] - org[1]) / sp[1]
    fz = (src[2] + t * d[2] - org[0]) / sp[0]
    return fz, fy, fx


@numba.njit(inline="always")
def _in_box(fz, fy, fx, nz, ny, nx):
    return (
        fz >= -0.5 and fz <= nz - 0.5
        and fy >= -0.5 and fy <= ny - 0.5
        and fx >= -0.5 and fx <= nx - 0.5
    )


@numba.njit(parallel=True, cache=True)
def _forward_kernel(vol, src, dirs, t0, nsamp, org, sp, step, out):
    nc, nz, ny, nx = vol.shape
    for r in numba.prange(dirs.shape[0]):
        d = dirs[r]
        for k in range(nsamp[r]):
            t = t0[r] + (k + 0.5) * step
            fz, fy, fx = _sample_index(src, d, t, org, sp)
            if not _in_box(fz, fy, fx, nz, ny, nx):
                continue
            z0, z1, wz = _axis_weight(fz, nz)
            y0, y1, wy = _axis_weight(fy, ny)
            x0, x1, wx = _axis_weight(fx, nx)
            for c in range(nc):
                v = vol[c]
                a = (1.0 - wx) * v[z0, y0, x0] + wx * v[z0, y0, x1]
                b = (1.0 - wx) * v[z0, y1, x0] + wx * v[z0, y1, x1]
                lo = (1.0 - wy) * a + wy * b
                a = (1.0 - wx) * v[z1, y0, x0] + wx * v[z1, y0, x1]
                b = (1.0 - wx) * v[z1, y1, x0] + wx * v[z1, y1, x1]
                hi = (1.0 - wy) * a + wy * b
                out[c, r] += (1.0 - wz) * lo + wz * hi
        for c in range(out.shape[0]):
            out[c, r] *= step


@numba.njit(inline="always")
def _scatter_xy(out, vals, s, w, y0, y1, wy, x0, x1, wx):
    for c in range(out.shape[0]):
        g = vals[c] * w
        out[c, s, y0, x0] += g * (1.0 - wy) * (1.0 - wx)
        out[c, s, y0, x1] += g * (1.0 - wy) * wx
        out[c, s, y1, x0] += g * wy * (1.0 - wx)
        out[c, s, y1, x1] += g * wy * wx


@numba.njit(parallel=True, cache=True)
def _back_kernel(proj, src, dirs, t0, nsamp, org, sp, step, out):
    nc, nz, ny, nx = out.shape
    nrays = dirs.shape[0]
    for s in numba.prange(nz):
        # samples touching slice s have fz in (s - 1, s + 1); widen for rounding
        lo_f = -1e300 if s == 0 else s - 1.5
        hi_f = 1e300 if s == nz - 1 else s + 1.5
        for r in range(nrays):
            n = nsamp[r]
            if n == 0:
                continue
            d = dirs[r]
            # fz is affine in k: fz = a + b * k
            a = (src[2] + (t0[r] + 0.5 * step) * d[2] - org[0]) / sp[0]
            b = step * d[2] / sp[0]
            if abs(b) < 1e-12:
                if a < lo_f or a > hi_f:
                    continue
                k_lo, k_hi = 0, n
            else:
                ka = (lo_f - a) / b
                kb = (hi_f - a) / b
                if ka > kb:
                    ka, kb = kb, ka
                k_lo = max(0, int(np.floor(max(ka, -1.0))) - 1)
                k_hi = min(n, int(np.ceil(min(kb, n + 1.0))) + 2)
            vals = proj[:, r]
            for k in range(k_lo, k_hi):
                t = t0[r] + (k + 0.5) * step
                fz, fy, fx = _sample_index(src, d, t, org, sp)
                if not _in_box(fz, fy, fx, nz, ny, nx):
                    continue
                z0, z1, wz = _axis_weight(fz, nz)
                if z0 != s and z1 != s:
                    continue
                y0, y1, wy = _axis_weight(fy, ny)
                x0, x1, wx = _axis_weight(fx, nx)
                if z0 == s:
                    _scatter_xy(out, vals, s, step * (1.0 - wz), y0, y1, wy, x0, x1, wx)
                if z1 == s:
                    _scatter_xy(out, vals, s, step * wz, y0, y1, wy, x0, x1, wx)


def _rays(geom: ConeBeamGeometry, angle: float, grid: Grid, step: float):
    src, dirs, t_near, t_far = ray_table(geom, angle, grid)
    hit = t_near <= t_far
    length = np.where(hit, t_far - t_near, 0.0)
    nsamp = np.where(hit, np.ceil(length / step), 0).astype(np.int64)
    t0 = np.where(hit, t_near, 0.0)
    return src, np.ascontiguousarray(dirs), t0, nsamp


def _check_step(step, grid):
    if step is None:
        return default_step(grid)
    step = float(step)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    return step


def forward_project(volume, geom: ConeBeamGeometry, angle: float, step: float | None = None) -> Projection:
    """Line integrals through ``volume`` (Volume or FeatureVolume) for every pixel."""
    if isinstance(volume, Volume):
        volume = FeatureVolume.from_volume(volume)
    grid = volume.grid
    step = _check_step(step, grid)
    src, dirs, t0, nsamp = _rays(geom, angle, grid, step)
    out = np.zeros((volume.channels, dirs.shape[0]))
    _forward_kernel(
        volume.data, src, dirs, t0, nsamp,
        np.array(grid.origin), np.array(grid.spacing), step, out,
    )
    return Projection(out.reshape(volume.channels, *geom.shape), angle, geom)


def back_project(projection: Projection, grid: Grid, step: float | None = None) -> FeatureVolume:
    """Transpose of :func:`forward_project` onto ``grid``."""
    step = _check_step(step, grid)
    geom = projection.geometry
    data = projection.data
    if data.shape[1:] != geom.shape:
        raise ValueError(f"projection {data.shape[1:]} does not match detector {geom.shape}")
    src, dirs, t0, nsamp = _rays(geom, projection.angle, grid, step)
    out = np.zeros((projection.channels, *grid.dims))
    _back_kernel(
        np.ascontiguousarray(data.reshape(projection.channels, -1)),
        src, dirs, t0, nsamp,
        np.array(grid.origin), np.array(grid.spacing), step, out,
    )
    return FeatureVolume(out, grid)


def back_project_multi(projections, grid: Grid, step: float | None = None) -> FeatureVolume:
    """Mean of the per-view back-projections.

    Views are accumulated in angle order so the result does not depend on
    the order they were passed in.
    """
    projections = list(projections)
    if not projections:
        raise ValueError("need at least one projection to back-project")
    channels = {p.channels for p in projections}
    if len(channels) != 1:
        raise ValueError(f"channel counts differ across views: {sorted(channels)}")
    acc = None
    for p in sorted(projections, key=lambda p: p.angle):
        bp = back_project(p, grid, step).data
        acc = bp if acc is None else acc + bp
    return FeatureVolume(acc / len(projections), grid)


def normalize_unit(projection: Projection) -> Projection:
    """Per-channel min-max scaling to [0, 1]; constant channels map to 0."""
    data = projection.data
    lo = data.min(axis=(1, 2), keepdims=True)
    rng = data.max(axis=(1, 2), keepdims=True) - lo
    safe = np.where(rng > 0, rng, 1.0)
    return projection.with_data(np.where(rng > 0, (data - lo) / safe, 0.0))


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def save_projection(projection: Projection, path) -> None:
    header = {
        "schema": 1,
        "kind": "projection",
        "channels": projection.channels,
        "rows": projection.geometry.det_rows,
        "cols": projection.geometry.det_cols,
        "angle": projection.angle,
        "geometry": projection.geometry.to_dict(),
    }
    write_raw_pair(path, header, projection.data)


def load_projection(path) -> Projection:
    header, data = read_raw_pair(path, lambda h: (h["channels"], h["rows"], h["cols"]))
    geom = ConeBeamGeometry.from_dict(header["geometry"])
    return Projection(data.astype(np.float64), header["angle"], geom)


def write_pgm(image: np.ndarray, path) -> None:
    """16-bit binary PGM; values are clipped to [0, 1] and mapped linearly."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"PGM export needs a 2D image, got {image.shape}")
    q = np.rint(np.clip(image, 0.0, 1.0) * 65535.0).astype(">u2")
    rows, cols = image.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n65535\n".encode("ascii") + q.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None or int(m.group(3)) != 65535:
        raise ValueError(f"{path} is not a 16-bit binary PGM")
    cols, rows = int(m.group(1)), int(m.group(2))
    q = np.frombuffer(raw, dtype=">u2", count=rows * cols, offset=m.end()).reshape(rows, cols)
    return q / 65535.0


def projection_stem(directory, prefix: str, angle: float) -> Path:
    return Path(directory) / f"{prefix}_a{angle:g}"

