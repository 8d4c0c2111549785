"""Numba-accelerated kernels; mirrors numpy_backend operation-for-operation.

The hot loops here dominate pipeline runtime: rasterizing and scoring
~1500 candidate views per reconstruction. ``score_views`` parallelizes
over candidates with prange; every candidate writes only its own output
slots, so results are identical for any thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

BACKEND_NAME = "numba"

_JIT = {"cache": True, "fastmath": False}


@njit(**_JIT)
def _raster_core(verts_cam, tris, tri_albedo, fx, fy, cx, cy, width, height, near,
                 depth, shade, triid):
    nv = verts_cam.shape[0]
    us = np.empty(nv)
    vs = np.empty(nv)
    zs = np.empty(nv)
    valid = np.empty(nv, dtype=np.uint8)
    for i in range(nv):
        z = verts_cam[i, 2]
        zs[i] = z
        if z > near:
            valid[i] = 1
            us[i] = fx * verts_cam[i, 0] / z + cx
            vs[i] = fy * verts_cam[i, 1] / z + cy
        else:
            valid[i] = 0
            us[i] = 0.0
            vs[i] = 0.0

    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        if valid[i0] == 0 or valid[i1] == 0 or valid[i2] == 0:
            continue
        u0 = us[i0]
        v0 = vs[i0]
        z0 = zs[i0]
        u1 = us[i1]
        v1 = vs[i1]
        z1 = zs[i1]
        u2 = us[i2]
        v2 = vs[i2]
        z2 = zs[i2]
        area2 = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if area2 < 0:
            tu, tv, tz = u1, v1, z1
            u1, v1, z1 = u2, v2, z2
            u2, v2, z2 = tu, tv, tz
            area2 = -area2
        if area2 < 1e-12:
            continue

        mnu = min(u0, min(u1, u2))
        mxu = max(u0, max(u1, u2))
        mnv = min(v0, min(v1, v2))
        mxv = max(v0, max(v1, v2))
        x0 = int(np.ceil(mnu - 0.5))
        x1 = int(np.floor(mxu - 0.5))
        y0 = int(np.ceil(mnv - 0.5))
        y1 = int(np.floor(mxv - 0.5))
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if x1 > width - 1:
            x1 = width - 1
        if y1 > height - 1:
            y1 = height - 1
        if x0 > x1 or y0 > y1:
            continue

        ax = verts_cam[i0, 0]
        ay = verts_cam[i0, 1]
        az = verts_cam[i0, 2]
        bx = verts_cam[i1, 0]
        by = verts_cam[i1, 1]
        bz = verts_cam[i1, 2]
        qx = verts_cam[i2, 0]
        qy = verts_cam[i2, 1]
        qz = verts_cam[i2, 2]
        e1x = bx - ax
        e1y = by - ay
        e1z = bz - az
        e2x = qx - ax
        e2y = qy - ay
        e2z = qz - az
        nx = e1y * e2z - e1z * e2y
        ny = e1z * e2x - e1x * e2z
        nz = e1x * e2y - e1y * e2x
        ccx = (ax + bx + qx) / 3.0
        ccy = (ay + by + qy) / 3.0
        ccz = (az + bz + qz) / 3.0
        nn = np.sqrt(nx * nx + ny * ny + nz * nz)
        cc = np.sqrt(ccx * ccx + ccy * ccy + ccz * ccz)
        if nn > 0 and cc > 0:
            lam = abs(nx * ccx + ny * ccy + nz * ccz) / (nn * cc)
        else:
            lam = 0.0
        sh = tri_albedo[t] * (0.1 + 0.9 * lam)

        tl0 = (v1 == v2 and u2 > u1) or (v2 < v1)
        tl1 = (v2 == v0 and u0 > u2) or (v0 < v2)
        tl2 = (v0 == v1 and u1 > u0) or (v1 < v0)
        for iy in range(y0, y1 + 1):
            py = iy + 0.5
            for ix in range(x0, x1 + 1):
                px = ix + 0.5
                w0 = (u2 - u1) * (py - v1) - (v2 - v1) * (px - u1)
                w1 = (u0 - u2) * (py - v2) - (v0 - v2) * (px - u2)
                w2 = (u1 - u0) * (py - v0) - (v1 - v0) * (px - u0)
                ok0 = w0 > 0 or (w0 == 0 and tl0)
                ok1 = w1 > 0 or (w1 == 0 and tl1)
                ok2 = w2 > 0 or (w2 == 0 and tl2)
                if ok0 and ok1 and ok2:
                    invz = (w0 / z0 + w1 / z1 + w2 / z2) / area2
                    if invz > 0:
                        zpix = 1.0 / invz
                        cur = depth[iy, ix]
                        if cur == 0 or zpix < cur:
                            depth[iy, ix] = zpix
                            shade[iy, ix] = sh
                            triid[iy, ix] = t


@njit(**_JIT)
def _rasterize_jit(verts_cam, tris, tri_albedo, fx, fy, cx, cy, width, height, near):
    depth = np.zeros((height, width))
    shade = np.zeros((height, width))
    triid = np.full((height, width), -1, dtype=np.int32)
    _raster_core(verts_cam, tris, tri_albedo, fx, fy, cx, cy, width, height, near,
                 depth, shade, triid)
    return depth, shade, triid


def rasterize(verts_cam, tris, tri_albedo, fx, fy, cx, cy, width, height, near=1e-6):
    """See numpy_backend.rasterize; same contract, numba-compiled."""
    return _rasterize_jit(
        np.ascontiguousarray(verts_cam),
        np.ascontiguousarray(tris),
        np.ascontiguousarray(tri_albedo),
        float(fx), float(fy), float(cx), float(cy),
        int(width), int(height), float(near),
    )


@njit(**_JIT)
def _coverage_bbox_jit(depth):
    h, w = depth.shape
    x0 = w
    x1 = -1
    y0 = h
    y1 = -1
    for iy in range(h):
        for ix in range(w):
            if depth[iy, ix] > 0:
                if ix < x0:
                    x0 = ix
                if ix > x1:
                    x1 = ix
                if iy < y0:
                    y0 = iy
                if iy > y1:
                    y1 = iy
    if x1 < 0:
        return -1, -1, -1, -1
    return x0, y0, x1, y1


def coverage_bbox(depth):
    return _coverage_bbox_jit(np.ascontiguousarray(depth))


@njit(**_JIT)
def _resample_jit(img, x0, y0, x1, y1, res):
    h_in = y1 - y0 + 1
    w_in = x1 - x0 + 1
    out = np.empty((res, res))
    for oy in range(res):
        sy = (oy + 0.5) * h_in / res - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h_in - 1.0:
            sy = h_in - 1.0
        iy0 = int(np.floor(sy))
        iy1 = min(iy0 + 1, h_in - 1)
        fy = sy - iy0
        for ox in range(res):
            sx = (ox + 0.5) * w_in / res - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w_in - 1.0:
                sx = w_in - 1.0
            ix0 = int(np.floor(sx))
            ix1 = min(ix0 + 1, w_in - 1)
            fx = sx - ix0
            tl = img[y0 + iy0, x0 + ix0]
            tr = img[y0 + iy0, x0 + ix1]
            bl = img[y0 + iy1, x0 + ix0]
            br = img[y0 + iy1, x0 + ix1]
            top = tl * (1.0 - fx) + tr * fx
            bot = bl * (1.0 - fx) + br * fx
            out[oy, ox] = top * (1.0 - fy) + bot * fy
    return out


def resample_bilinear(img, x0, y0, x1, y1, res):
    return _resample_jit(np.ascontiguousarray(img), int(x0), int(y0), int(x1), int(y1), int(res))


@njit(**_JIT)
def _laplacian_edge_jit(img, threshold):
    h, w = img.shape
    mag = np.zeros((h, w))
    m = 0.0
    for iy in range(h):
        for ix in range(w):
            up = img[iy - 1, ix] if iy > 0 else 0.0
            dn = img[iy + 1, ix] if iy < h - 1 else 0.0
            lf = img[iy, ix - 1] if ix > 0 else 0.0
            rt = img[iy, ix + 1] if ix < w - 1 else 0.0
            v = abs(up + dn + lf + rt - 4.0 * img[iy, ix])
            mag[iy, ix] = v
            if v > m:
                m = v
    if m > 0:
        for iy in range(h):
            for ix in range(w):
                v = mag[iy, ix] / m
                mag[iy, ix] = v if v >= threshold else 0.0
    return mag


def laplacian_edge(img, threshold):
    return _laplacian_edge_jit(np.ascontiguousarray(img), float(threshold))


@njit(**_JIT)
def _ncc_jit(a, b):
    num = 0.0
    da = 0.0
    db = 0.0
    h, w = a.shape
    for iy in range(h):
        for ix in range(w):
            num += a[iy, ix] * b[iy, ix]
            da += a[iy, ix] * a[iy, ix]
            db += b[iy, ix] * b[iy, ix]
    if da <= 0.0 or db <= 0.0:
        return 0.0
    return num / np.sqrt(da * db)


def ncc(a, b):
    return _ncc_jit(np.ascontiguousarray(a), np.ascontiguousarray(b))


@njit(**_JIT)
def _patch_ssim_jit(a, b, patch_grid, c1, c2):
    res = a.shape[0]
    total = 0.0
    for gy in range(patch_grid):
        ylo = (gy * res) // patch_grid
        yhi = ((gy + 1) * res) // patch_grid
        for gx in range(patch_grid):
            xlo = (gx * res) // patch_grid
            xhi = ((gx + 1) * res) // patch_grid
            n = (yhi - ylo) * (xhi - xlo)
            sa = 0.0
            sb = 0.0
            saa = 0.0
            sbb = 0.0
            sab = 0.0
            for iy in range(ylo, yhi):
                for ix in range(xlo, xhi):
                    va = a[iy, ix]
                    vb = b[iy, ix]
                    sa += va
                    sb += vb
                    saa += va * va
                    sbb += vb * vb
                    sab += va * vb
            mu_a = sa / n
            mu_b = sb / n
            var_a = saa / n - mu_a * mu_a
            var_b = sbb / n - mu_b * mu_b
            cov = sab / n - mu_a * mu_b
            num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
            den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
            total += num / den
    return total / (patch_grid * patch_grid)


def patch_ssim(a, b, patch_grid, c1, c2):
    return _patch_ssim_jit(
        np.ascontiguousarray(a), np.ascontiguousarray(b), int(patch_grid), float(c1), float(c2)
    )


@njit(**_JIT)
def _ratio_jit(obs_w, obs_h, ren_w, ren_h):
    r_obs = obs_w / obs_h
    r_ren = ren_w / ren_h
    return 1.0 - min(abs(r_obs - r_ren) / r_obs, 1.0)


def ratio_similarity(obs_w, obs_h, ren_w, ren_h):
    return _ratio_jit(float(obs_w), float(obs_h), float(ren_w), float(ren_h))


@njit(cache=True, fastmath=False, parallel=True)
def _score_views_jit(
    verts, tris, tri_albedo, poses, fx, fy, cx, cy, width, height, near,
    obs_img, obs_edge, obs_w, obs_h, res, patch_grid, c1, c2, edge_thresh, want_ssim,
):
    n_cand = poses.shape[0]
    nv = verts.shape[0]
    s_ssim = np.full(n_cand, np.nan)
    s_edge = np.zeros(n_cand)
    s_ratio = np.zeros(n_cand)
    nonempty = np.zeros(n_cand, dtype=np.uint8)
    bboxes = np.full((n_cand, 4), -1, dtype=np.int32)
    for k in prange(n_cand):
        verts_cam = np.empty((nv, 3))
        for i in range(nv):
            x = verts[i, 0]
            y = verts[i, 1]
            z = verts[i, 2]
            verts_cam[i, 0] = poses[k, 0, 0] * x + poses[k, 0, 1] * y + poses[k, 0, 2] * z + poses[k, 0, 3]
            verts_cam[i, 1] = poses[k, 1, 0] * x + poses[k, 1, 1] * y + poses[k, 1, 2] * z + poses[k, 1, 3]
            verts_cam[i, 2] = poses[k, 2, 0] * x + poses[k, 2, 1] * y + poses[k, 2, 2] * z + poses[k, 2, 3]
        depth = np.zeros((height, width))
        shade = np.zeros((height, width))
        triid = np.full((height, width), -1, dtype=np.int32)
        _raster_core(verts_cam, tris, tri_albedo, fx, fy, cx, cy, width, height, near,
                     depth, shade, triid)
        x0, y0, x1, y1 = _coverage_bbox_jit(depth)
        if x0 < 0:
            continue
        nonempty[k] = 1
        bboxes[k, 0] = x0
        bboxes[k, 1] = y0
        bboxes[k, 2] = x1
        bboxes[k, 3] = y1
        s_ratio[k] = _ratio_jit(obs_w, obs_h, float(x1 - x0 + 1), float(y1 - y0 + 1))
        img_r = _resample_jit(shade, x0, y0, x1, y1, res)
        edge_r = _laplacian_edge_jit(img_r, edge_thresh)
        s_edge[k] = _ncc_jit(obs_edge, edge_r)
        if want_ssim:
            s_ssim[k] = _patch_ssim_jit(obs_img, img_r, patch_grid, c1, c2)
    return s_ssim, s_edge, s_ratio, nonempty, bboxes


def score_views(
    verts, tris, tri_albedo, poses, fx, fy, cx, cy, width, height, near,
    obs_img, obs_edge, obs_w, obs_h, res, patch_grid, c1, c2, edge_thresh, want_ssim,
):
    """See numpy_backend.score_views; candidates evaluated in parallel."""
    return _score_views_jit(
        np.ascontiguousarray(verts),
        np.ascontiguousarray(tris),
        np.ascontiguousarray(tri_albedo),
        np.ascontiguousarray(poses),
        float(fx), float(fy), float(cx), float(cy),
        int(width), int(height), float(near),
        np.ascontiguousarray(obs_img),
        np.ascontiguousarray(obs_edge),
        float(obs_w), float(obs_h),
        int(res), int(patch_grid), float(c1), float(c2), float(edge_thresh),
        bool(want_ssim),
    )
