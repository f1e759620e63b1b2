"""Small built-in verification run backing the ``selftest`` command.

Every check reports its measured residual next to its tolerance.  All
randomness is seeded, so the report is reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .geometry import (
    ConeBeamGeometry,
    detector_pixel_centers,
    ray_table,
    rotate_z,
    source_position,
)
from .projector import FeatureVolume, Projection, back_project, forward_project
from .volume import Ellipsoid, Grid, PhantomSpec, Volume, make_phantom

ADJOINT_TOL = 1e-5
CHORD_CENTRAL_TOL = 0.01
CHORD_OFFAXIS_TOL = 0.02
CHORD_MIN_MM = 25.0
ROTATION_TOL = 1e-9


@dataclass
class Check:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def _geometry() -> ConeBeamGeometry:
    # odd detector so one pixel lies on the principal ray
    return ConeBeamGeometry(det_rows=49, det_cols=65, pixel_pitch=(6.0, 6.0))


def check_adjoint(step=None, trials: int = 5, seed: int = 0) -> Check:
    geom = _geometry()
    grid = Grid.centered((32, 32, 32), (4.0, 4.0, 4.0))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        angle = float(rng.uniform(0.0, 360.0))
        x = FeatureVolume(rng.standard_normal((1, *grid.dims)), grid)
        y = Projection(rng.standard_normal((1, *geom.shape)), angle, geom)
        ax = forward_project(x, geom, angle, step).data
        aty = back_project(y, grid, step).data
        lhs = float(np.vdot(ax, y.data))
        rhs = float(np.vdot(x.data, aty))
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(ax) * np.linalg.norm(y.data)))
    return Check("adjoint_identity", worst, ADJOINT_TOL)


def _cube(mu=0.002):
    # 100 mm homogeneous cube filling the whole grid
    return Volume(np.full((32, 32, 32), mu), (3.125, 3.125, 3.125))


def check_chord(step=None, n_rays: int = 100, seed: int = 0) -> list[Check]:
    mu = 0.002
    geom = _geometry()
    cube = _cube(mu)
    proj = forward_project(cube, geom, 0.0, step).data[0]
    central = proj[geom.det_rows // 2, geom.det_cols // 2]
    checks = [Check("chord_central_ray", abs(central - 100.0 * mu) / (100.0 * mu), CHORD_CENTRAL_TOL)]

    src, dirs, t_near, t_far = ray_table(geom, 0.0, cube.grid)
    chord = np.maximum(t_far - t_near, 0.0).reshape(geom.shape)
    rows, cols = np.nonzero(chord >= CHORD_MIN_MM)
    rng = np.random.default_rng(seed)
    pick = rng.choice(rows.size, size=min(n_rays, rows.size), replace=False)
    expected = mu * chord[rows[pick], cols[pick]]
    got = proj[rows[pick], cols[pick]]
    checks.append(Check("chord_off_axis", float(np.max(np.abs(got - expected) / expected)), CHORD_OFFAXIS_TOL))
    return checks


def check_rotation(step=None) -> list[Check]:
    geom = _geometry()
    base_src = source_position(geom, 0.0)
    base_pix = detector_pixel_centers(geom, 0.0)
    worst = 0.0
    for angle in (30.0, 60.0, 90.0, 217.5):
        d_src = np.abs(source_position(geom, angle) - rotate_z(base_src, angle)).max()
        d_pix = np.abs(detector_pixel_centers(geom, angle) - rotate_z(base_pix, angle)).max()
        worst = max(worst, d_src / geom.sad, d_pix / geom.sdd)
    checks = [Check("rotation_geometry", float(worst), ROTATION_TOL)]

    # the voxelized sphere is exactly symmetric under quarter turns of the grid
    sphere = make_phantom(PhantomSpec((32, 32, 32), (4.0, 4.0, 4.0), 0.0, (Ellipsoid((0, 0, 0), (40, 40, 40), 0.02),)))
    views = [forward_project(sphere, geom, a, step).data for a in (0.0, 90.0, 180.0, 270.0)]
    mae = max(float(np.mean(np.abs(a - b))) for a, b in combinations(views, 2))
    checks.append(Check("rotation_sphere_quarter_turns", mae, ROTATION_TOL))
    return checks


def run_selftest(step=None) -> dict:
    checks = [check_adjoint(step), *check_chord(step), *check_rotation(step)]
    return {
        "schema": 1,
        "checks": [c.to_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }


__all__ = ["Check", "check_adjoint", "check_chord", "check_rotation", "run_selftest"]
