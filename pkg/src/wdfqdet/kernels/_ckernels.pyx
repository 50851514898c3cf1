# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: im2col/col2im, bilinear gather/scatter, assignment.

Scatter order matches ``_pykernels``; the two backends agree to rounding.
"""
import numpy as np
from libc.math cimport floor


def im2col(const double[:, :, :, ::1] xp, int kh, int kw, int stride,
           int dilation, int ho, int wo):
    cdef Py_ssize_t n_batch = xp.shape[0], n_chan = xp.shape[1]
    out = np.empty((n_batch, n_chan * kh * kw, ho * wo), dtype=np.float64)
    cdef double[:, :, ::1] cols = out
    cdef Py_ssize_t n, c, i, j, oh, ow, row
    for n in range(n_batch):
        for c in range(n_chan):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    for oh in range(ho):
                        for ow in range(wo):
                            cols[n, row, oh * wo + ow] = xp[
                                n, c, i * dilation + oh * stride, j * dilation + ow * stride]
    return out


def col2im(const double[:, :, ::1] cols, int n_chan, int hp, int wp, int kh,
           int kw, int stride, int dilation, int ho, int wo):
    cdef Py_ssize_t n_batch = cols.shape[0]
    out = np.zeros((n_batch, n_chan, hp, wp), dtype=np.float64)
    cdef double[:, :, :, ::1] xp = out
    cdef Py_ssize_t n, c, i, j, oh, ow, row
    for i in range(kh):
        for j in range(kw):
            for n in range(n_batch):
                for c in range(n_chan):
                    row = (c * kh + i) * kw + j
                    for oh in range(ho):
                        for ow in range(wo):
                            xp[n, c, i * dilation + oh * stride, j * dilation + ow * stride] += \
                                cols[n, row, oh * wo + ow]
    return out


cdef inline void _corner(double p, Py_ssize_t extent, Py_ssize_t* i0,
                         Py_ssize_t* i1, double* frac, double* dscale):
    cdef double raw = p * extent - 0.5
    cdef double c = raw
    dscale[0] = <double>extent
    if c <= 0.0:
        c = 0.0
        if raw < 0.0:
            dscale[0] = 0.0
    if c >= extent - 1:
        c = <double>(extent - 1)
        if raw > extent - 1:
            dscale[0] = 0.0
    if extent == 1:
        i0[0] = 0
        i1[0] = 0
        frac[0] = 0.0
        dscale[0] = 0.0
        return
    i0[0] = <Py_ssize_t>floor(c)
    if i0[0] > extent - 2:
        i0[0] = extent - 2
    i1[0] = i0[0] + 1
    frac[0] = c - i0[0]


def bilinear_forward(const double[:, :, :, ::1] x, const double[:, :, ::1] pts):
    cdef Py_ssize_t n_batch = x.shape[0], n_chan = x.shape[1]
    cdef Py_ssize_t height = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t n_pts = pts.shape[1]
    out = np.empty((n_batch, n_pts, n_chan), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t n, p, c, x0, x1, y0, y1
    cdef double fx, fy, sx, sy
    for n in range(n_batch):
        for p in range(n_pts):
            _corner(pts[n, p, 0], width, &x0, &x1, &fx, &sx)
            _corner(pts[n, p, 1], height, &y0, &y1, &fy, &sy)
            for c in range(n_chan):
                o[n, p, c] = (1.0 - fy) * ((1.0 - fx) * x[n, c, y0, x0] + fx * x[n, c, y0, x1]) \
                    + fy * ((1.0 - fx) * x[n, c, y1, x0] + fx * x[n, c, y1, x1])
    return out


def bilinear_backward(const double[:, :, :, ::1] x, const double[:, :, ::1] pts,
                      const double[:, :, ::1] g):
    cdef Py_ssize_t n_batch = x.shape[0], n_chan = x.shape[1]
    cdef Py_ssize_t height = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t n_pts = pts.shape[1]
    gx_arr = np.zeros((n_batch, n_chan, height, width), dtype=np.float64)
    gp_arr = np.zeros((n_batch, n_pts, 2), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gp = gp_arr
    cdef Py_ssize_t n, p, c, x0, x1, y0, y1, corner
    cdef double fx, fy, sx, sy, w, dfx, dfy, gc
    # corners outermost: same scatter order as numpy's sequential add.at passes
    for corner in range(4):
        for n in range(n_batch):
            for p in range(n_pts):
                _corner(pts[n, p, 0], width, &x0, &x1, &fx, &sx)
                _corner(pts[n, p, 1], height, &y0, &y1, &fy, &sy)
                for c in range(n_chan):
                    gc = g[n, p, c]
                    if corner == 0:
                        gx[n, c, y0, x0] += (1.0 - fy) * (1.0 - fx) * gc
                    elif corner == 1:
                        gx[n, c, y0, x1] += (1.0 - fy) * fx * gc
                    elif corner == 2:
                        gx[n, c, y1, x0] += fy * (1.0 - fx) * gc
                    else:
                        gx[n, c, y1, x1] += fy * fx * gc
    for n in range(n_batch):
        for p in range(n_pts):
            _corner(pts[n, p, 0], width, &x0, &x1, &fx, &sx)
            _corner(pts[n, p, 1], height, &y0, &y1, &fy, &sy)
            dfx = 0.0
            dfy = 0.0
            for c in range(n_chan):
                gc = g[n, p, c]
                dfx += gc * ((1.0 - fy) * (x[n, c, y0, x1] - x[n, c, y0, x0])
                             + fy * (x[n, c, y1, x1] - x[n, c, y1, x0]))
                dfy += gc * ((1.0 - fx) * (x[n, c, y1, x0] - x[n, c, y0, x0])
                             + fx * (x[n, c, y1, x1] - x[n, c, y0, x1]))
            gp[n, p, 0] = dfx * sx
            gp[n, p, 1] = dfy * sy
    return gx_arr, gp_arr


def linear_assignment(const double[:, ::1] cost):
    """Shortest augmenting path assignment of rows onto distinct columns.

    Requires rows <= columns. Returns the column chosen for each row.
    """
    cdef Py_ssize_t n = cost.shape[0], m = cost.shape[1]
    cdef double inf = float("inf")
    u_arr = np.zeros(n + 1)
    v_arr = np.zeros(m + 1)
    minv_arr = np.empty(m + 1)
    p_arr = np.zeros(m + 1, dtype=np.intp)
    way_arr = np.zeros(m + 1, dtype=np.intp)
    used_arr = np.zeros(m + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef Py_ssize_t[::1] pm = p_arr, way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double delta, cur
    for i in range(1, n + 1):
        pm[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = inf
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = pm[j0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[pm[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if pm[j0] == 0:
                break
        while True:
            j1 = way[j0]
            pm[j0] = pm[j1]
            j0 = j1
            if j0 == 0:
                break
    result = np.full(n, -1, dtype=np.intp)
    for j in range(1, m + 1):
        if pm[j] != 0:
            result[pm[j] - 1] = j - 1
    return result
