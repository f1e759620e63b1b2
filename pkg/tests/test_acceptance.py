"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary
(see conftest.py) and also asserts, so a failing criterion turns the run red.
"""

import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import box_chord, naive_mae, naive_nrmse, pixel_xyz, source_xyz
from viewsynth.geometry import ConeBeamGeometry, default_geometry
from viewsynth.losses import (
    DiscriminatorScores,
    LossWeights,
    adversarial_loss_discriminator,
    adversarial_loss_generator,
    cycle_consistency_loss,
    reconstruction_loss,
    total_loss,
)
from viewsynth.metrics import mae, nrmse, psnr, ssim
from viewsynth.projector import FeatureVolume, Projection, back_project, forward_project, normalize_unit
from viewsynth.synthesis import identity_encoder, passthrough_generator, synthesize
from viewsynth.transform import identity_refiner
from viewsynth.volume import Ellipsoid, Grid, PhantomSpec, Volume, make_phantom, random_phantom_spec

REPO = Path(__file__).resolve().parents[1]


def record(name, ok, detail):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE.append((name, status, detail))
    print(f"{status} {name}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module", autouse=True)
def _warm_up():
    # load or compile the kernels once so timings measure work, not JIT
    geom = ConeBeamGeometry(det_rows=4, det_cols=4)
    grid = Grid.centered((4, 4, 4), (1.0, 1.0, 1.0))
    p = forward_project(FeatureVolume(np.ones(grid.dims), grid), geom, 0.0)
    back_project(p, grid)


def test_adjoint_identity():
    geom = ConeBeamGeometry(det_rows=48, det_cols=64, pixel_pitch=(4.0, 4.0))
    grid = Grid.centered((32, 32, 32), (4.0, 4.0, 4.0))
    rng = np.random.default_rng(2024)
    worst = 0.0
    t = time.perf_counter()
    for _ in range(20):
        angle = float(rng.uniform(0, 360))
        x = FeatureVolume(rng.normal(size=grid.dims), grid)
        y = Projection(rng.normal(size=geom.shape), angle, geom)
        ax = forward_project(x, geom, angle)
        aty = back_project(y, grid)
        lhs, rhs = float(np.vdot(ax.data, y.data)), float(np.vdot(x.data, aty.data))
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(ax.data) * np.linalg.norm(y.data)))
    elapsed = time.perf_counter() - t
    record(
        "adjoint identity",
        worst <= 1e-5 and elapsed < 10.0,
        f"20 pairs, worst relative residual {worst:.2e} (tol 1e-5), {elapsed:.2f} s (limit 10 s)",
    )


def test_analytic_cube_drr():
    mu = 0.002
    cube = Volume(np.full((100, 100, 100), mu), (1.0, 1.0, 1.0))
    # shift the detector half a pixel so pixel (90, 150) sits on the principal ray
    geom = ConeBeamGeometry(det_offset=(-1.0, -1.0))
    lo, hi = cube.grid.bounds_xyz()
    rng = np.random.default_rng(7)
    central = forward_project(cube, geom, 0.0).data[0, 90, 150]
    central_err = abs(central - 0.2) / 0.2

    worst, n = 0.0, 0
    for angle in (0.0, 37.0):
        img = forward_project(cube, geom, angle).data[0]
        src = source_xyz(geom.sad, angle)
        picked = 0
        while picked < 50:
            r, c = int(rng.integers(geom.det_rows)), int(rng.integers(geom.det_cols))
            chord = box_chord(src, pixel_xyz(geom, angle, r, c), lo, hi)
            if chord < 25.0:  # grazing chords make a relative error meaningless
                continue
            worst = max(worst, abs(img[r, c] - mu * chord) / (mu * chord))
            picked += 1
        n += picked
    record(
        "analytic cube DRR",
        central_err <= 0.01 and worst <= 0.02,
        f"central {central:.6f} vs 0.2 (err {central_err:.2e}, tol 1%); "
        f"{n} off-axis rays with chord >= 25 mm, worst err {worst:.2e} (tol 2%)",
    )


def test_rotation_equivariance_sphere():
    spec = PhantomSpec(dims=(96, 96, 96), spacing=(0.5, 0.5, 0.5), ellipsoids=[Ellipsoid((0, 0, 0), (20, 20, 20), 0.02)])
    vol = make_phantom(spec)
    geom = default_geometry()
    views = {a: forward_project(vol, geom, a).data for a in (0.0, 30.0, 60.0, 90.0)}
    worst = max(mae(views[a], views[b]) for a in views for b in views if a < b)
    record(
        "rotation equivariance",
        worst <= 1e-4,
        f"sphere r=20 mm on 96^3 @ 0.5 mm, views 0/30/60/90, worst pairwise MAE {worst:.2e} (tol 1e-4)",
    )


def test_pipeline_fidelity_two_views_beat_one():
    geom = default_geometry().binned(2)
    stages = dict(encoder=identity_encoder(), refiner=identity_refiner(), generator=passthrough_generator())
    rows, ok = [], True
    t = time.perf_counter()
    for seed in range(5):
        vol = make_phantom(random_phantom_spec(np.random.default_rng(seed)))
        render = lambda a: normalize_unit(forward_project(vol, geom, a))  # noqa: E731
        views = {a: render(a) for a in (0.0, 30.0, 60.0, 90.0)}
        kw = dict(stages, geometry=geom, grid=vol.grid)
        one = synthesize([views[0.0]], [30.0, 60.0], **kw).targets
        two = synthesize([views[0.0], views[90.0]], [30.0, 60.0], **kw).targets
        m1 = np.mean([mae(p, views[p.angle]) for p in one])
        m2 = np.mean([mae(p, views[p.angle]) for p in two])
        ok &= bool(m2 < m1)
        rows.append(f"seed {seed}: {m2:.4f} < {m1:.4f}")
    elapsed = time.perf_counter() - t
    record(
        "pipeline fidelity",
        ok and elapsed < 60.0,
        f"two-view vs one-view mean MAE at 30/60 deg ({'; '.join(rows)}), {elapsed:.1f} s (limit 60 s)",
    )


def test_metric_goldens():
    rng = np.random.default_rng(11)
    a = rng.random((32, 32))
    p = psnr(np.clip(a, 0, 0.9) + 0.1, np.clip(a, 0, 0.9))
    s = ssim(a, a)
    worst = 0.0
    for _ in range(10):
        x, y = rng.random((16, 16)), rng.random((16, 16))
        worst = max(worst, abs(mae(x, y) - naive_mae(x, y)), abs(nrmse(x, y) - naive_nrmse(x, y)))
    record(
        "metric golden values",
        abs(p - 20.0) <= 1e-6 and s == 1.0 and worst <= 1e-9,
        f"PSNR {p:.9f} dB (20 +- 1e-6), SSIM(x,x) = {s!r}, MAE/NRMSE vs naive max diff {worst:.1e} (tol 1e-9)",
    )


def test_loss_arithmetic():
    total = total_loss(0.2, 0.05, 0.3, LossWeights(1, 10, 1))
    x = np.random.default_rng(0).random((1, 8, 8))
    t = np.array([0.4, 0.2])
    ones, zeros = [np.ones((4, 4))], [np.zeros((4, 4))]
    optima = [
        reconstruction_loss(x, x),
        cycle_consistency_loss((x, t), (x, t)),
        adversarial_loss_generator(DiscriminatorScores(fake=ones)),
        adversarial_loss_discriminator(DiscriminatorScores(real=ones, fake=zeros)),
        total_loss(0.0, 0.0, 0.0),
    ]
    record(
        "loss arithmetic",
        total == 1.0 and all(v == 0.0 for v in optima),
        f"total_loss(0.2, 0.05, 0.3; 1, 10, 1) = {total!r}; optima = {optima}",
    )


def _cli(args, threads, cwd):
    env = dict(os.environ, NUMBA_NUM_THREADS="8")
    r = subprocess.run(
        [sys.executable, "-m", "viewsynth", "--threads", str(threads), *args],
        capture_output=True, cwd=cwd, env=env,
    )
    assert r.returncode == 0, r.stderr.decode()
    return r.stdout


def test_determinism_across_threads(tmp_path):
    spec = REPO / "configs" / "phantom_thorax.json"
    outputs = {}
    for threads in (1, 2, 8):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        cfg = {
            "schema": 1, "binning": 2, "phantom": {"spec": str(spec)},
            "sources": [{"angle": 0}, {"angle": 90}], "target_angles": [30, 60],
            "stages": {"refiner": "smoothing:3"}, "output_dir": "out", "pgm": True,
        }
        (d / "run.json").write_text(json.dumps(cfg))
        files = {"selftest.stdout": _cli(["selftest", "--out", "selftest.json"], threads, d)}
        files["synthesize.stdout"] = _cli(["synthesize", "run.json"], threads, d)
        files.update({f.name: f.read_bytes() for f in sorted((d / "out").iterdir())})
        files["selftest.json"] = (d / "selftest.json").read_bytes()
        outputs[threads] = files
    same = outputs[1] == outputs[2] == outputs[8]
    record(
        "determinism",
        same,
        f"selftest + phantom synthesis at --threads 1/2/8: {len(outputs[1])} artifacts "
        + ("byte-identical" if same else "DIFFER"),
    )


def test_excluded_trained_model_scores_and_timings():
    ACCEPTANCE.append((
        "trained-model scores and inference timings",
        "EXCLUDED",
        "need trained networks and a clinical CT dataset; the property criteria above stand in for them",
    ))
    pytest.skip("excluded: not reproducible without trained networks and clinical data")
