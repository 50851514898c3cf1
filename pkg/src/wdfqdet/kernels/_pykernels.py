"""Numpy/pure-Python implementations of the hot kernels.

Used when the compiled extension is unavailable or when
``WDFQDET_PURE_PYTHON`` is set.
"""
import numpy as np


def im2col(xp, kh, kw, stride, dilation, ho, wo):
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            r0, c0 = i * dilation, j * dilation
            cols[:, :, i, j] = xp[:, :, r0:r0 + stride * (ho - 1) + 1:stride,
                                  c0:c0 + stride * (wo - 1) + 1:stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def col2im(cols, n_chan, hp, wp, kh, kw, stride, dilation, ho, wo):
    n = cols.shape[0]
    cols = cols.reshape(n, n_chan, kh, kw, ho, wo)
    xp = np.zeros((n, n_chan, hp, wp), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            r0, c0 = i * dilation, j * dilation
            xp[:, :, r0:r0 + stride * (ho - 1) + 1:stride,
               c0:c0 + stride * (wo - 1) + 1:stride] += cols[:, :, i, j]
    return xp


def _corners(p, extent):
    raw = p * extent - 0.5
    c = np.clip(raw, 0.0, extent - 1)
    scale = np.where((raw < 0.0) | (raw > extent - 1), 0.0, float(extent))
    if extent == 1:
        zero = np.zeros(p.shape, dtype=np.intp)
        return zero, zero, np.zeros(p.shape), np.zeros(p.shape)
    i0 = np.minimum(np.floor(c).astype(np.intp), extent - 2)
    return i0, i0 + 1, c - i0, scale


def _gather(x, n_idx, yi, xi):
    # (N, C, H, W) -> values at (n, :, y, x) laid out as (N, P, C)
    return x.transpose(0, 2, 3, 1)[n_idx, yi, xi]


def bilinear_forward(x, pts):
    height, width = x.shape[2:]
    x0, x1, fx, _ = _corners(pts[..., 0], width)
    y0, y1, fy, _ = _corners(pts[..., 1], height)
    n_idx = np.arange(x.shape[0])[:, None]
    fx, fy = fx[..., None], fy[..., None]
    return ((1.0 - fy) * ((1.0 - fx) * _gather(x, n_idx, y0, x0) + fx * _gather(x, n_idx, y0, x1))
            + fy * ((1.0 - fx) * _gather(x, n_idx, y1, x0) + fx * _gather(x, n_idx, y1, x1)))


def bilinear_backward(x, pts, g):
    height, width = x.shape[2:]
    x0, x1, fx, sx = _corners(pts[..., 0], width)
    y0, y1, fy, sy = _corners(pts[..., 1], height)
    n_idx = np.broadcast_to(np.arange(x.shape[0])[:, None], x0.shape)
    gxt = np.zeros((x.shape[0], height, width, x.shape[1]))
    fxe, fye = fx[..., None], fy[..., None]
    np.add.at(gxt, (n_idx, y0, x0), (1.0 - fye) * (1.0 - fxe) * g)
    np.add.at(gxt, (n_idx, y0, x1), (1.0 - fye) * fxe * g)
    np.add.at(gxt, (n_idx, y1, x0), fye * (1.0 - fxe) * g)
    np.add.at(gxt, (n_idx, y1, x1), fye * fxe * g)
    v00, v01 = _gather(x, n_idx, y0, x0), _gather(x, n_idx, y0, x1)
    v10, v11 = _gather(x, n_idx, y1, x0), _gather(x, n_idx, y1, x1)
    dfx = (g * ((1.0 - fye) * (v01 - v00) + fye * (v11 - v10))).sum(axis=-1)
    dfy = (g * ((1.0 - fxe) * (v10 - v00) + fxe * (v11 - v01))).sum(axis=-1)
    gp = np.stack([dfx * sx, dfy * sy], axis=-1)
    return np.ascontiguousarray(gxt.transpose(0, 3, 1, 2)), gp


def linear_assignment(cost):
    """Shortest augmenting path assignment of rows onto distinct columns.

    Requires rows <= columns. Returns the column chosen for each row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    a = cost.tolist()
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            row = a[i0 - 1]
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    result = np.full(n, -1, dtype=np.intp)
    for j in range(1, m + 1):
        if p[j] != 0:
            result[p[j] - 1] = j - 1
    return result
