# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels; see ``_kernels_py`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor, INFINITY

cnp.import_array()

cdef double EPS = 1e-12
cdef double EDGE_EPS = 1e-9


cdef inline void _cross(double* a, double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _dot(double* a, double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def ray_parity(points, direction, v0, v1, v2):
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] A = np.ascontiguousarray(v0, dtype=np.float64)
    cdef double[:, ::1] B = np.ascontiguousarray(v1, dtype=np.float64)
    cdef double[:, ::1] C = np.ascontiguousarray(v2, dtype=np.float64)
    cdef double[::1] D = np.ascontiguousarray(direction, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], m = A.shape[0], i, j, k
    out_c = np.zeros(n, dtype=np.int64)
    out_d = np.zeros(n, dtype=bool)
    cdef long long[::1] cross_v = out_c
    cdef cnp.npy_bool[::1] deg_v = out_d
    cdef double e1[3]
    cdef double e2[3]
    cdef double pv[3]
    cdef double tv[3]
    cdef double qv[3]
    cdef double d[3]
    cdef double det, inv, u, v, t
    cdef long long cnt
    cdef bint deg, inside
    d[0] = D[0]; d[1] = D[1]; d[2] = D[2]
    with nogil:
        for i in range(n):
            cnt = 0
            deg = False
            for j in range(m):
                for k in range(3):
                    e1[k] = B[j, k] - A[j, k]
                    e2[k] = C[j, k] - A[j, k]
                _cross(d, e2, pv)
                det = _dot(e1, pv)
                if fabs(det) <= EPS:
                    continue
                inv = 1.0 / det
                for k in range(3):
                    tv[k] = P[i, k] - A[j, k]
                u = _dot(tv, pv) * inv
                _cross(tv, e1, qv)
                v = _dot(qv, d) * inv
                t = _dot(qv, e2) * inv
                inside = u >= -EDGE_EPS and v >= -EDGE_EPS and u + v <= 1.0 + EDGE_EPS
                if not inside:
                    continue
                if fabs(t) <= EDGE_EPS:
                    deg = True
                elif t > EDGE_EPS:
                    cnt += 1
                if t > -EDGE_EPS and (u <= EDGE_EPS or v <= EDGE_EPS or u + v >= 1.0 - EDGE_EPS):
                    deg = True
            cross_v[i] = cnt
            deg_v[i] = deg
    return out_c, out_d


def ray_nearest(origin, direction, v0, v1, v2, double tmin=1e-9):
    cdef double[:, ::1] A = np.ascontiguousarray(v0, dtype=np.float64)
    cdef double[:, ::1] B = np.ascontiguousarray(v1, dtype=np.float64)
    cdef double[:, ::1] C = np.ascontiguousarray(v2, dtype=np.float64)
    cdef double[::1] O = np.ascontiguousarray(origin, dtype=np.float64)
    cdef double[::1] D = np.ascontiguousarray(direction, dtype=np.float64)
    cdef Py_ssize_t m = A.shape[0], j, k
    cdef double e1[3]
    cdef double e2[3]
    cdef double pv[3]
    cdef double tv[3]
    cdef double qv[3]
    cdef double d[3]
    cdef double det, inv, u, v, t, best = INFINITY
    d[0] = D[0]; d[1] = D[1]; d[2] = D[2]
    with nogil:
        for j in range(m):
            for k in range(3):
                e1[k] = B[j, k] - A[j, k]
                e2[k] = C[j, k] - A[j, k]
                tv[k] = O[k] - A[j, k]
            _cross(d, e2, pv)
            det = _dot(e1, pv)
            if fabs(det) <= EPS:
                continue
            inv = 1.0 / det
            u = _dot(tv, pv) * inv
            if u < -EDGE_EPS or u > 1.0 + EDGE_EPS:
                continue
            _cross(tv, e1, qv)
            v = _dot(qv, d) * inv
            if v < -EDGE_EPS or u + v > 1.0 + EDGE_EPS:
                continue
            t = _dot(qv, e2) * inv
            if t > tmin and t < best:
                best = t
    return best


cdef inline bint _sep(double* axis, double* a, double* b, double* c, double* half) noexcept nogil:
    cdef double pa = _dot(axis, a), pb = _dot(axis, b), pc = _dot(axis, c)
    cdef double lo = pa, hi = pa
    if pb < lo: lo = pb
    if pc < lo: lo = pc
    if pb > hi: hi = pb
    if pc > hi: hi = pc
    cdef double r = fabs(axis[0]) * half[0] + fabs(axis[1]) * half[1] + fabs(axis[2]) * half[2]
    return lo > r + EPS or hi < -r - EPS


cdef bint _overlap(double* a, double* b, double* c, double* half) noexcept nogil:
    cdef double e[3][3]
    cdef double ax[3]
    cdef double unit[3]
    cdef int i, k
    cdef double lo, hi
    for k in range(3):
        lo = a[k]; hi = a[k]
        if b[k] < lo: lo = b[k]
        if c[k] < lo: lo = c[k]
        if b[k] > hi: hi = b[k]
        if c[k] > hi: hi = c[k]
        if lo > half[k] + EPS or hi < -half[k] - EPS:
            return False
    for k in range(3):
        e[0][k] = b[k] - a[k]
        e[1][k] = c[k] - b[k]
        e[2][k] = a[k] - c[k]
    _cross(e[0], e[1], ax)
    if ax[0] != 0.0 or ax[1] != 0.0 or ax[2] != 0.0:
        if _sep(ax, a, b, c, half):
            return False
    for i in range(3):
        for k in range(3):
            unit[0] = 0.0; unit[1] = 0.0; unit[2] = 0.0
            unit[k] = 1.0
            _cross(e[i], unit, ax)
            if fabs(ax[0]) > EPS or fabs(ax[1]) > EPS or fabs(ax[2]) > EPS:
                if _sep(ax, a, b, c, half):
                    return False
    return True


def voxelize(v0, v1, v2, origin, double cell, dims):
    cdef double[:, ::1] A = np.ascontiguousarray(v0, dtype=np.float64)
    cdef double[:, ::1] B = np.ascontiguousarray(v1, dtype=np.float64)
    cdef double[:, ::1] C = np.ascontiguousarray(v2, dtype=np.float64)
    cdef double[::1] O = np.ascontiguousarray(origin, dtype=np.float64)
    cdef Py_ssize_t nx = dims[0], ny = dims[1], nz = dims[2]
    grid_arr = np.zeros((nx, ny, nz), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] grid = grid_arr
    cdef Py_ssize_t m = A.shape[0], j, k, ix, iy, iz
    cdef long lo[3]
    cdef long hi[3]
    cdef long top[3]
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cdef double half[3]
    cdef double ctr[3]
    cdef double mn, mx
    top[0] = nx - 1; top[1] = ny - 1; top[2] = nz - 1
    half[0] = cell / 2.0; half[1] = cell / 2.0; half[2] = cell / 2.0
    with nogil:
        for j in range(m):
            for k in range(3):
                mn = A[j, k]; mx = A[j, k]
                if B[j, k] < mn: mn = B[j, k]
                if C[j, k] < mn: mn = C[j, k]
                if B[j, k] > mx: mx = B[j, k]
                if C[j, k] > mx: mx = C[j, k]
                lo[k] = <long>floor((mn - O[k]) / cell - 1e-9)
                hi[k] = <long>floor((mx - O[k]) / cell + 1e-9)
                if lo[k] < 0: lo[k] = 0
                if hi[k] < 0: hi[k] = 0
                if lo[k] > top[k]: lo[k] = top[k]
                if hi[k] > top[k]: hi[k] = top[k]
            for ix in range(lo[0], hi[0] + 1):
                for iy in range(lo[1], hi[1] + 1):
                    for iz in range(lo[2], hi[2] + 1):
                        if grid[ix, iy, iz]:
                            continue
                        ctr[0] = O[0] + (ix + 0.5) * cell
                        ctr[1] = O[1] + (iy + 0.5) * cell
                        ctr[2] = O[2] + (iz + 0.5) * cell
                        for k in range(3):
                            a[k] = A[j, k] - ctr[k]
                            b[k] = B[j, k] - ctr[k]
                            c[k] = C[j, k] - ctr[k]
                        if _overlap(a, b, c, half):
                            grid[ix, iy, iz] = 1
    return grid_arr
