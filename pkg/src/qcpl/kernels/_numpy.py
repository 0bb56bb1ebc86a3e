"""Vectorized numpy implementations of the per-cell kernels.

Every function takes stacked per-cell arrays and returns one value (or one
row) per cell. Shapes: ``c`` cells, ``k`` base vectors, ``p`` points per
cell, ``m`` ambient dimension.
"""
import math

import numpy as np


def simplex_volumes(base):
    """k-volume of the simplices spanned by ``base`` of shape (c, k, m)."""
    k = base.shape[1]
    gram = base @ base.transpose(0, 2, 1)
    det = np.linalg.det(gram)
    return np.sqrt(np.maximum(det, 0.0)) / math.factorial(k)


def vertex_diameters(pts):
    c, p, _ = pts.shape
    out = np.zeros(c)
    for i in range(p):
        for j in range(i + 1, p):
            np.maximum(out, np.linalg.norm(pts[:, i] - pts[:, j], axis=1), out=out)
    return out


def projected_dets(frames, base):
    """det(frames @ base^T) per cell; frames and base both (c, d, m)."""
    return np.linalg.det(frames @ base.transpose(0, 2, 1))


def origin_barycentric(simplices):
    """Barycentric coordinates of the origin w.r.t. simplices (c, d+1, d).

    Rows for degenerate simplices are NaN.
    """
    c, p, d = simplices.shape
    v0 = simplices[:, 0, :]
    b = (simplices[:, 1:, :] - v0[:, None, :]).transpose(0, 2, 1)
    det = np.linalg.det(b)
    scale = np.max(np.abs(b), axis=(1, 2)) ** d
    bad = ~(np.abs(det) > 1e-14 * np.maximum(scale, 1e-300))
    b = b.copy()
    b[bad] = np.eye(d)
    mu = np.linalg.solve(b, -v0[:, :, None])[:, :, 0]
    lam = np.empty((c, p))
    lam[:, 1:] = mu
    lam[:, 0] = 1.0 - mu.sum(axis=1)
    lam[bad] = np.nan
    return lam


def _product_sphere_distance(x, block_starts, radii):
    sq = np.zeros(x.shape[:-1])
    for f in range(len(radii)):
        seg = x[..., block_starts[f]:block_starts[f + 1]]
        sq += (np.linalg.norm(seg, axis=-1) - radii[f]) ** 2
    return np.sqrt(sq)


def hull_max_distance(pts, block_starts, radii):
    """Max distance to a product of spheres over a finite hull sample.

    The sample is the vertices, the edge midpoints and the barycenter.
    """
    p = pts.shape[1]
    samples = [pts]
    iu, ju = np.triu_indices(p, 1)
    samples.append(0.5 * (pts[:, iu] + pts[:, ju]))
    samples.append(pts.mean(axis=1, keepdims=True))
    s = np.concatenate(samples, axis=1)
    return _product_sphere_distance(s, block_starts, radii).max(axis=1)
