"""Pure-numpy implementations of the rasterization and scoring kernels.

This is the fallback path selected with MESHMEND_BACKEND=numpy; the
numba backend mirrors these routines operation-for-operation so both
produce the same coverage and scores (up to float summation order).
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def rasterize(verts_cam, tris, tri_albedo, fx, fy, cx, cy, width, height, near=1e-6):
    """Z-buffer rasterization of camera-frame triangles.

    Perspective-correct depth, flat Lambert headlight shading with a
    two-sided normal and a 0.1 ambient floor, top-left fill rule.
    Triangles with any vertex at z <= near are dropped (no clipping).

    Returns (depth, shade, triangle-id) images; background is depth 0,
    shade 0, id -1.
    """
    depth = np.zeros((height, width), dtype=np.float64)
    shade = np.zeros((height, width), dtype=np.float64)
    triid = np.full((height, width), -1, dtype=np.int32)

    zs = verts_cam[:, 2]
    valid = zs > near
    safe_z = np.where(valid, zs, 1.0)
    us = fx * verts_cam[:, 0] / safe_z + cx
    vs = fy * verts_cam[:, 1] / safe_z + cy

    for t in range(len(tris)):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        if not (valid[i0] and valid[i1] and valid[i2]):
            continue
        u0, v0, z0 = us[i0], vs[i0], zs[i0]
        u1, v1, z1 = us[i1], vs[i1], zs[i1]
        u2, v2, z2 = us[i2], vs[i2], zs[i2]
        area2 = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if area2 < 0:
            u1, v1, z1, u2, v2, z2 = u2, v2, z2, u1, v1, z1
            area2 = -area2
        if area2 < 1e-12:
            continue

        x0 = max(0, int(np.ceil(min(u0, u1, u2) - 0.5)))
        x1 = min(width - 1, int(np.floor(max(u0, u1, u2) - 0.5)))
        y0 = max(0, int(np.ceil(min(v0, v1, v2) - 0.5)))
        y1 = min(height - 1, int(np.floor(max(v0, v1, v2) - 0.5)))
        if x0 > x1 or y0 > y1:
            continue

        # flat headlight shading from camera-frame geometry
        p0, p1, p2 = verts_cam[i0], verts_cam[i1], verts_cam[i2]
        n = np.cross(p1 - p0, p2 - p0)
        c = (p0 + p1 + p2) / 3.0
        nn = np.sqrt(n @ n)
        cc = np.sqrt(c @ c)
        lam = abs(n @ c) / (nn * cc) if nn > 0 and cc > 0 else 0.0
        sh = tri_albedo[t] * (0.1 + 0.9 * lam)

        px = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
        py = (np.arange(y0, y1 + 1, dtype=np.float64) + 0.5)[:, None]
        w0 = (u2 - u1) * (py - v1) - (v2 - v1) * (px - u1)
        w1 = (u0 - u2) * (py - v2) - (v0 - v2) * (px - u2)
        w2 = (u1 - u0) * (py - v0) - (v1 - v0) * (px - u0)
        tl0 = (v1 == v2 and u2 > u1) or (v2 < v1)
        tl1 = (v2 == v0 and u0 > u2) or (v0 < v2)
        tl2 = (v0 == v1 and u1 > u0) or (v1 < v0)
        cover = (
            ((w0 > 0) | ((w0 == 0) & tl0))
            & ((w1 > 0) | ((w1 == 0) & tl1))
            & ((w2 > 0) | ((w2 == 0) & tl2))
        )
        if not cover.any():
            continue
        invz = (w0 / z0 + w1 / z1 + w2 / z2) / area2
        zpix = 1.0 / np.where(invz > 0, invz, 1.0)

        cur = depth[y0 : y1 + 1, x0 : x1 + 1]
        upd = cover & (invz > 0) & ((cur == 0) | (zpix < cur))
        cur[upd] = zpix[upd]
        shade[y0 : y1 + 1, x0 : x1 + 1][upd] = sh
        triid[y0 : y1 + 1, x0 : x1 + 1][upd] = t
    return depth, shade, triid


def coverage_bbox(depth):
    """Tight bbox (x0, y0, x1, y1) of depth > 0, or (-1,)*4 when empty."""
    rows = np.any(depth > 0, axis=1)
    cols = np.any(depth > 0, axis=0)
    if not rows.any():
        return -1, -1, -1, -1
    y0 = int(np.argmax(rows))
    y1 = int(len(rows) - 1 - np.argmax(rows[::-1]))
    x0 = int(np.argmax(cols))
    x1 = int(len(cols) - 1 - np.argmax(cols[::-1]))
    return x0, y0, x1, y1


def resample_bilinear(img, x0, y0, x1, y1, res):
    """Bilinear resample of the inclusive crop [x0..x1]x[y0..y1] to res x res."""
    h_in = y1 - y0 + 1
    w_in = x1 - x0 + 1
    oy = np.arange(res, dtype=np.float64)
    ox = np.arange(res, dtype=np.float64)
    sy = (oy + 0.5) * h_in / res - 0.5
    sx = (ox + 0.5) * w_in / res - 0.5
    sy = np.clip(sy, 0.0, h_in - 1.0)
    sx = np.clip(sx, 0.0, w_in - 1.0)
    iy0 = np.floor(sy).astype(np.int64)
    ix0 = np.floor(sx).astype(np.int64)
    iy1 = np.minimum(iy0 + 1, h_in - 1)
    ix1 = np.minimum(ix0 + 1, w_in - 1)
    fy = sy - iy0
    fx = sx - ix0
    crop = img[y0 : y1 + 1, x0 : x1 + 1]
    tl = crop[np.ix_(iy0, ix0)]
    tr = crop[np.ix_(iy0, ix1)]
    bl = crop[np.ix_(iy1, ix0)]
    br = crop[np.ix_(iy1, ix1)]
    fx = fx[None, :]
    fyc = fy[:, None]
    top = tl * (1.0 - fx) + tr * fx
    bot = bl * (1.0 - fx) + br * fx
    return top * (1.0 - fyc) + bot * fyc


def laplacian_edge(img, threshold):
    """4-neighbor Laplacian magnitude, max-normalized, small values zeroed."""
    h, w = img.shape
    p = np.zeros((h + 2, w + 2), dtype=np.float64)
    p[1:-1, 1:-1] = img
    lap = (
        p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * p[1:-1, 1:-1]
    )
    mag = np.abs(lap)
    m = mag.max()
    if m > 0:
        mag = mag / m
        mag[mag < threshold] = 0.0
    return mag


def ncc(a, b):
    """Normalized cross-correlation; 0 when either input is all-zero."""
    num = float(np.sum(a * b))
    da = float(np.sum(a * a))
    db = float(np.sum(b * b))
    if da <= 0.0 or db <= 0.0:
        return 0.0
    return num / np.sqrt(da * db)


def patch_ssim(a, b, patch_grid, c1, c2):
    """Mean of the SSIM kernel over a patch_grid x patch_grid partition.

    Patch statistics are plain (population) means/variances/covariance.
    """
    res = a.shape[0]
    bounds = [(k * res) // patch_grid for k in range(patch_grid + 1)]
    total = 0.0
    for gy in range(patch_grid):
        for gx in range(patch_grid):
            pa = a[bounds[gy] : bounds[gy + 1], bounds[gx] : bounds[gx + 1]]
            pb = b[bounds[gy] : bounds[gy + 1], bounds[gx] : bounds[gx + 1]]
            n = pa.size
            mu_a = float(pa.sum()) / n
            mu_b = float(pb.sum()) / n
            var_a = float((pa * pa).sum()) / n - mu_a * mu_a
            var_b = float((pb * pb).sum()) / n - mu_b * mu_b
            cov = float((pa * pb).sum()) / n - mu_a * mu_b
            num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
            den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
            total += num / den
    return total / (patch_grid * patch_grid)


def ratio_similarity(obs_w, obs_h, ren_w, ren_h):
    """Aspect-ratio similarity, normalized by the observed ratio."""
    r_obs = obs_w / obs_h
    r_ren = ren_w / ren_h
    return 1.0 - min(abs(r_obs - r_ren) / r_obs, 1.0)


def score_views(
    verts,
    tris,
    tri_albedo,
    poses,
    fx,
    fy,
    cx,
    cy,
    width,
    height,
    near,
    obs_img,
    obs_edge,
    obs_w,
    obs_h,
    res,
    patch_grid,
    c1,
    c2,
    edge_thresh,
    want_ssim,
):
    """Render and score each candidate pose against the observed crop.

    ``poses`` is (C, 3, 4), camera-from-object. Returns per-candidate
    (s_ssim, s_edge, s_ratio, nonempty); s_ssim is NaN unless requested.
    """
    n_cand = len(poses)
    s_ssim = np.full(n_cand, np.nan)
    s_edge = np.zeros(n_cand)
    s_ratio = np.zeros(n_cand)
    nonempty = np.zeros(n_cand, dtype=np.uint8)
    bboxes = np.full((n_cand, 4), -1, dtype=np.int32)
    for k in range(n_cand):
        rot = poses[k, :, :3]
        t = poses[k, :, 3]
        verts_cam = verts @ rot.T + t
        depth, shade, _ = rasterize(
            verts_cam, tris, tri_albedo, fx, fy, cx, cy, width, height, near
        )
        x0, y0, x1, y1 = coverage_bbox(depth)
        if x0 < 0:
            continue
        nonempty[k] = 1
        bboxes[k, 0] = x0
        bboxes[k, 1] = y0
        bboxes[k, 2] = x1
        bboxes[k, 3] = y1
        s_ratio[k] = ratio_similarity(obs_w, obs_h, float(x1 - x0 + 1), float(y1 - y0 + 1))
        img_r = resample_bilinear(shade, x0, y0, x1, y1, res)
        edge_r = laplacian_edge(img_r, edge_thresh)
        s_edge[k] = ncc(obs_edge, edge_r)
        if want_ssim:
            s_ssim[k] = patch_ssim(obs_img, img_r, patch_grid, c1, c2)
    return s_ssim, s_edge, s_ratio, nonempty, bboxes
