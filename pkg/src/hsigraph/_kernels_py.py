"""Numpy implementations of the geometry kernels.

These mirror ``_kernels.pyx`` argument for argument and are used when the
compiled extension is missing or ``HSIGRAPH_PURE=1`` is set.
"""

import numpy as np

EPS = 1e-12
EDGE_EPS = 1e-9


def ray_parity(points, direction, v0, v1, v2):
    """Count ray/triangle crossings from each point along ``direction``.

    Returns ``(crossings, degenerate)``.  A point is degenerate for this
    direction when the ray passes within ``EDGE_EPS`` of a triangle edge
    or vertex, or the point lies on a triangle (|t| small); the caller
    then retries with another direction.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    P = points.shape[0]
    crossings = np.zeros(P, dtype=np.int64)
    degenerate = np.zeros(P, dtype=bool)
    if P == 0 or v0.shape[0] == 0:
        return crossings, degenerate
    d = np.asarray(direction, dtype=np.float64)
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(d, e2)                       # (T, 3)
    det = np.einsum("ij,ij->i", e1, pvec)        # (T,)
    ok = np.abs(det) > EPS
    if not np.any(ok):
        return crossings, degenerate
    e1, e2, v0, pvec, det = e1[ok], e2[ok], v0[ok], pvec[ok], det[ok]
    inv = 1.0 / det
    # chunk over points to bound memory
    step = max(1, 200000 // max(1, v0.shape[0]))
    for s in range(0, P, step):
        p = points[s:s + step]
        tvec = p[:, None, :] - v0[None, :, :]                         # (p, T, 3)
        u = np.einsum("ptk,tk->pt", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None, :, :])
        v = (qvec @ d) * inv
        t = np.einsum("ptk,tk->pt", qvec, e2) * inv
        inside_tri = (u >= -EDGE_EPS) & (v >= -EDGE_EPS) & (u + v <= 1.0 + EDGE_EPS)
        near_edge = inside_tri & ((u <= EDGE_EPS) | (v <= EDGE_EPS) | (u + v >= 1.0 - EDGE_EPS))
        on_surface = inside_tri & (np.abs(t) <= EDGE_EPS)
        hit = inside_tri & (t > EDGE_EPS)
        crossings[s:s + step] = hit.sum(axis=1)
        degenerate[s:s + step] = np.any((near_edge & (t > -EDGE_EPS)) | on_surface, axis=1)
    return crossings, degenerate


def ray_nearest(origin, direction, v0, v1, v2, tmin=1e-9):
    """Smallest hit distance ``t > tmin`` of one ray over all triangles, ``inf`` if none."""
    if v0.shape[0] == 0:
        return np.inf
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > EPS
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = o - v0
    u = np.einsum("ij,ij->i", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = (qvec @ d) * inv
    t = np.einsum("ij,ij->i", qvec, e2) * inv
    hit = ok & (u >= -EDGE_EPS) & (v >= -EDGE_EPS) & (u + v <= 1.0 + EDGE_EPS) & (t > tmin)
    if not np.any(hit):
        return np.inf
    return float(t[hit].min())


def _axis_test(axes, tri_c, half):
    # axes: (..., 3); tri_c: (C, 3, 3) triangle verts relative to box centers
    p = np.einsum("cvk,...k->c...v", tri_c, axes)               # (C, ..., 3)
    r = np.abs(axes) @ half                                      # (...)
    return ~((p.min(axis=-1) > r + EPS) | (p.max(axis=-1) < -r - EPS))


def voxelize(v0, v1, v2, origin, cell, dims):
    """Conservative surface voxelization; returns uint8 array of shape ``dims``.

    A cell is marked when the closed cell box and the closed triangle
    intersect (separating-axis test with 13 axes).
    """
    dims = tuple(int(d) for d in dims)
    grid = np.zeros(dims, dtype=np.uint8)
    origin = np.asarray(origin, dtype=np.float64)
    half = np.full(3, cell / 2.0)
    hi_idx = np.array(dims) - 1
    for a, b, c in zip(v0, v1, v2):
        tri = np.stack([a, b, c])
        lo = np.clip(np.floor((tri.min(0) - origin) / cell - 1e-9).astype(np.int64), 0, hi_idx)
        hi = np.clip(np.floor((tri.max(0) - origin) / cell + 1e-9).astype(np.int64), 0, hi_idx)
        ii, jj, kk = np.meshgrid(*(np.arange(lo[k], hi[k] + 1) for k in range(3)), indexing="ij")
        idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
        centers = origin + (idx + 0.5) * cell
        tc = tri[None, :, :] - centers[:, None, :]               # (C, 3, 3)
        e = np.stack([b - a, c - b, a - c])                       # (3, 3)
        keep = np.ones(len(idx), dtype=bool)
        # box face normals
        for k in range(3):
            keep &= ~((tc[:, :, k].min(1) > half[k] + EPS) | (tc[:, :, k].max(1) < -half[k] - EPS))
        # triangle normal
        n = np.cross(e[0], e[1])
        if np.any(n != 0):
            keep &= _axis_test(n, tc, half)
        # edge cross products
        I = np.eye(3)
        for ei in e:
            for k in range(3):
                ax = np.cross(ei, I[k])
                if np.any(np.abs(ax) > EPS):
                    keep &= _axis_test(ax, tc, half)
        sel = idx[keep]
        grid[sel[:, 0], sel[:, 1], sel[:, 2]] = 1
    return grid
