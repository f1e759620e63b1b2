"""Slow, independent reference implementations used only by the tests.

Nothing here imports the kernels under test; geometry is rebuilt from the
documented conventions with plain Python math.
"""

import math

import numpy as np


def rot2(angle_deg):
    th = math.radians(angle_deg)
    return np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])


def source_xyz(sad, angle):
    x, y = rot2(angle) @ np.array([0.0, -sad])
    return np.array([x, y, 0.0])


def pixel_xyz(geom, angle, row, col):
    pv, pu = geom.pixel_pitch
    ov, ou = geom.det_offset
    u = (col - (geom.det_cols - 1) / 2) * pu + ou
    v = (row - (geom.det_rows - 1) / 2) * pv + ov
    x, y = rot2(angle) @ np.array([u, geom.sdd - geom.sad])
    return np.array([x, y, v])


def box_chord(src, pix, lo, hi):
    """Length of the segment of the line src->pix (beyond src) inside the box."""
    d = pix - src
    d = d / np.linalg.norm(d)
    t0, t1 = 0.0, math.inf
    for k in range(3):
        if d[k] == 0:
            if not lo[k] <= src[k] <= hi[k]:
                return 0.0
            continue
        a, b = (lo[k] - src[k]) / d[k], (hi[k] - src[k]) / d[k]
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
    return max(0.0, t1 - t0)


def siddon_line_integral(vol, spacing, origin, src, pix):
    """Exact path length through piecewise-constant voxels (nearest-voxel model).

    ``vol`` is (z, y, x); ``spacing``/``origin`` are (z, y, x); points are (x, y, z).
    """
    sp = np.array(spacing[::-1], dtype=float)
    n = np.array(vol.shape[::-1])
    lo = np.array(origin[::-1], dtype=float) - sp / 2
    d = pix - src
    length = np.linalg.norm(d)
    d = d / length
    ts = {0.0}
    for k in range(3):
        if d[k] != 0:
            for i in range(n[k] + 1):
                t = (lo[k] + i * sp[k] - src[k]) / d[k]
                if t > 0:
                    ts.add(t)
    ts = sorted(ts)
    total = 0.0
    for a, b in zip(ts[:-1], ts[1:]):
        mid = src + 0.5 * (a + b) * d
        idx = np.floor((mid - lo) / sp).astype(int)
        if np.all(idx >= 0) and np.all(idx < n):
            total += (b - a) * vol[idx[2], idx[1], idx[0]]
    return total


def trilinear_clamped(vol, f):
    """Trilinear value at fractional index ``f = (fz, fy, fx)``; 0 outside the box."""
    dims = vol.shape
    if any(fi < -0.5 or fi > n - 0.5 for fi, n in zip(f, dims)):
        return 0.0
    idx, w = [], []
    for fi, n in zip(f, dims):
        fi = min(max(fi, 0.0), n - 1.0)
        i0 = min(int(math.floor(fi)), max(n - 2, 0))
        i1 = min(i0 + 1, n - 1)
        idx.append((i0, i1))
        w.append(fi - i0)
    total = 0.0
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                wt = (w[0] if a else 1 - w[0]) * (w[1] if b else 1 - w[1]) * (w[2] if c else 1 - w[2])
                total += wt * vol[idx[0][a], idx[1][b], idx[2][c]]
    return total


def naive_line_integral(vol, spacing, origin, src, pix, step):
    """Midpoint-sampled trilinear line integral, written out ray by ray."""
    sp = np.array(spacing[::-1], dtype=float)
    n = np.array(vol.shape[::-1])
    org = np.array(origin[::-1], dtype=float)
    lo, hi = org - sp / 2, org + (n - 1) * sp + sp / 2
    d = (pix - src) / np.linalg.norm(pix - src)
    t0, t1 = 0.0, math.inf
    for k in range(3):
        if d[k] == 0:
            if not lo[k] <= src[k] <= hi[k]:
                return 0.0
            continue
        a, b = (lo[k] - src[k]) / d[k], (hi[k] - src[k]) / d[k]
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
    if t0 > t1:
        return 0.0
    total = 0.0
    for k in range(math.ceil((t1 - t0) / step)):
        p = src + (t0 + (k + 0.5) * step) * d
        f = ((p - org) / sp)[::-1]
        total += trilinear_clamped(vol, f)
    return step * total


# -- image metrics, one pixel at a time ------------------------------------


def naive_mae(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s += abs(a[i, j] - b[i, j])
    return s / a.size


def naive_mse(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s += (a[i, j] - b[i, j]) ** 2
    return s / a.size


def naive_nrmse(a, b):
    return math.sqrt(naive_mse(a, b)) / (b.max() - b.min())


def naive_psnr(a, b, data_range=1.0):
    return 10 * math.log10(data_range**2 / naive_mse(a, b))


def naive_ssim(a, b, win=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0, structure=False):
    """Mean SSIM over all fully-contained windows; optionally the bare structure term map."""
    g = [math.exp(-((i - (win - 1) / 2) ** 2) / (2 * sigma**2)) for i in range(win)]
    gs = sum(g)
    w2 = [[g[i] * g[j] / gs**2 for j in range(win)] for i in range(win)]
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    vals, struct = [], []
    for r in range(a.shape[0] - win + 1):
        for c in range(a.shape[1] - win + 1):
            ma = mb = 0.0
            for i in range(win):
                for j in range(win):
                    ma += w2[i][j] * a[r + i, c + j]
                    mb += w2[i][j] * b[r + i, c + j]
            va = vb = cov = 0.0
            for i in range(win):
                for j in range(win):
                    da, db = a[r + i, c + j] - ma, b[r + i, c + j] - mb
                    va += w2[i][j] * da * da
                    vb += w2[i][j] * db * db
                    cov += w2[i][j] * da * db
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
            if va > 0 and vb > 0:
                struct.append(cov / math.sqrt(va * vb))
    if structure:
        return struct
    return sum(vals) / len(vals)
