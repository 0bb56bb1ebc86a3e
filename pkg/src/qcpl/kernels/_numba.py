"""numba-compiled loop kernels; same contracts as the numpy backend."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _det_inplace(a, n):
    # LU with partial pivoting; destroys a.
    det = 1.0
    for col in range(n):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, n):
            v = abs(a[r, col])
            if v > best:
                best = v
                piv = r
        if best == 0.0:
            return 0.0
        if piv != col:
            for q in range(n):
                tmp = a[col, q]
                a[col, q] = a[piv, q]
                a[piv, q] = tmp
            det = -det
        pv = a[col, col]
        det *= pv
        for r in range(col + 1, n):
            f = a[r, col] / pv
            if f != 0.0:
                for q in range(col + 1, n):
                    a[r, q] -= f * a[col, q]
    return det


@njit(cache=True)
def simplex_volumes(base):
    c, k, m = base.shape
    out = np.empty(c)
    g = np.empty((k, k))
    fact = 1.0
    for i in range(2, k + 1):
        fact *= i
    for t in range(c):
        for i in range(k):
            for j in range(i, k):
                s = 0.0
                for q in range(m):
                    s += base[t, i, q] * base[t, j, q]
                g[i, j] = s
                g[j, i] = s
        det = _det_inplace(g, k)
        out[t] = math.sqrt(det) / fact if det > 0.0 else 0.0
    return out


@njit(cache=True)
def vertex_diameters(pts):
    c, p, m = pts.shape
    out = np.zeros(c)
    for t in range(c):
        best = 0.0
        for i in range(p):
            for j in range(i + 1, p):
                s = 0.0
                for q in range(m):
                    dq = pts[t, i, q] - pts[t, j, q]
                    s += dq * dq
                if s > best:
                    best = s
        out[t] = math.sqrt(best)
    return out


@njit(cache=True)
def projected_dets(frames, base):
    c, d, m = frames.shape
    out = np.empty(c)
    a = np.empty((d, d))
    for t in range(c):
        for i in range(d):
            for j in range(d):
                s = 0.0
                for q in range(m):
                    s += frames[t, i, q] * base[t, j, q]
                a[i, j] = s
        out[t] = _det_inplace(a, d)
    return out


@njit(cache=True)
def origin_barycentric(simplices):
    c, p, d = simplices.shape
    out = np.empty((c, p))
    a = np.empty((d, d + 1))
    for t in range(c):
        scale = 0.0
        for i in range(d):
            for j in range(d):
                v = simplices[t, j + 1, i] - simplices[t, 0, i]
                a[i, j] = v
                if abs(v) > scale:
                    scale = abs(v)
            a[i, d] = -simplices[t, 0, i]
        det = 1.0
        ok = True
        for col in range(d):
            piv = col
            best = abs(a[col, col])
            for r in range(col + 1, d):
                if abs(a[r, col]) > best:
                    best = abs(a[r, col])
                    piv = r
            if best == 0.0:
                ok = False
                break
            if piv != col:
                for q in range(d + 1):
                    tmp = a[col, q]
                    a[col, q] = a[piv, q]
                    a[piv, q] = tmp
            det *= a[col, col]
            for r in range(col + 1, d):
                f = a[r, col] / a[col, col]
                for q in range(col, d + 1):
                    a[r, q] -= f * a[col, q]
        if not ok or not abs(det) > 1e-14 * max(scale, 1e-300) ** d:
            for i in range(p):
                out[t, i] = np.nan
            continue
        total = 0.0
        for i in range(d - 1, -1, -1):
            s = a[i, d]
            for j in range(i + 1, d):
                s -= a[i, j] * out[t, j + 1]
            out[t, i + 1] = s / a[i, i]
            total += out[t, i + 1]
        out[t, 0] = 1.0 - total
    return out


@njit(cache=True)
def _dist_point(x, block_starts, radii):
    sq = 0.0
    for f in range(radii.shape[0]):
        s = 0.0
        for q in range(block_starts[f], block_starts[f + 1]):
            s += x[q] * x[q]
        e = math.sqrt(s) - radii[f]
        sq += e * e
    return math.sqrt(sq)


@njit(cache=True)
def hull_max_distance(pts, block_starts, radii):
    c, p, m = pts.shape
    out = np.empty(c)
    x = np.empty(m)
    for t in range(c):
        best = 0.0
        for i in range(p):
            dd = _dist_point(pts[t, i], block_starts, radii)
            if dd > best:
                best = dd
        for i in range(p):
            for j in range(i + 1, p):
                for q in range(m):
                    x[q] = 0.5 * (pts[t, i, q] + pts[t, j, q])
                dd = _dist_point(x, block_starts, radii)
                if dd > best:
                    best = dd
        for q in range(m):
            s = 0.0
            for i in range(p):
                s += pts[t, i, q]
            x[q] = s / p
        dd = _dist_point(x, block_starts, radii)
        if dd > best:
            best = dd
        out[t] = best
    return out
