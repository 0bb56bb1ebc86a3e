"""Embedded products of round spheres with analytic charts.

A round sphere S^k(r) in R^{k+1}, the Clifford torus S^1(1/sqrt2) x
S^1(1/sqrt2) in R^4 and S^3 x S^3 in R^8 are all products of round spheres,
so normal projection, exp, log, geodesic distance and tangent frames are
computed factor by factor. All point arguments broadcast over leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DegenerateSimplex,
    InjectivityRadiusExceeded,
    NotTangent,
    OutsideTube,
    UnsupportedManifold,
)
from .simplex import Simplex, linear_dilatation

ON_MANIFOLD_TOL = 1e-9
TANGENT_TOL = 1e-8


# --------------------------------------------------------------------------
# single-factor helpers on blocks (..., k+1)
# --------------------------------------------------------------------------


def _sphere_exp(x, v, r):
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    theta = nv / r
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(nv > 0, v / np.where(nv > 0, nv, 1.0), 0.0)
    y = x * np.cos(theta) + direction * r * np.sin(theta)
    # keep outputs exactly on the sphere
    return r * y / np.linalg.norm(y, axis=-1, keepdims=True)


def _sphere_angle(xh, yh):
    return 2.0 * np.arctan2(
        np.linalg.norm(xh - yh, axis=-1), np.linalg.norm(xh + yh, axis=-1)
    )


def _sphere_log(x, y, r):
    xh = x / np.linalg.norm(x, axis=-1, keepdims=True)
    yh = y / np.linalg.norm(y, axis=-1, keepdims=True)
    c = (xh * yh).sum(-1, keepdims=True)
    w = yh - c * xh
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    theta = _sphere_angle(xh, yh)[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(nw > 0, r * theta * w / np.where(nw > 0, nw, 1.0), 0.0)


def _sphere_frame(x):
    """Orthonormal tangent rows (..., k, k+1) with det[t_1..t_k, n] > 0."""
    n = x / np.linalg.norm(x, axis=-1, keepdims=True)
    k1 = n.shape[-1]
    last = n[..., -1:]
    sgn = np.where(last >= 0, 1.0, -1.0)
    u = n.copy()
    u[..., -1] += sgn[..., 0]
    uu = (u * u).sum(-1)[..., None, None]
    h = np.eye(k1) - 2.0 * u[..., :, None] * u[..., None, :] / uu
    frame = h[..., : k1 - 1, :].copy()
    # det[H e_1..H e_k, n] = +1 when n = -H e_last, i.e. sgn > 0
    flip = sgn[..., 0] < 0
    frame[..., 0, :] = np.where(flip[..., None], -frame[..., 0, :], frame[..., 0, :])
    return frame


@dataclass(frozen=True)
class EmbeddedManifold:
    """Product of round spheres, embedded blockwise in R^m.

    ``factors`` lists (intrinsic dimension, radius) per sphere factor.
    """

    kind: str
    factors: tuple
    tube_epsilon: float
    injectivity_radius: float

    @property
    def d(self):
        return sum(k for k, _ in self.factors)

    @property
    def m(self):
        return sum(k + 1 for k, _ in self.factors)

    @property
    def block_starts(self):
        starts = [0]
        for k, _ in self.factors:
            starts.append(starts[-1] + k + 1)
        return np.array(starts, dtype=np.int64)

    @property
    def radii(self):
        return np.array([r for _, r in self.factors], dtype=float)

    @property
    def reach(self):
        return float(self.radii.min())

    @property
    def id(self):
        if self.kind == "sphere":
            k, r = self.factors[0]
            return f"sphere:d={k},r={r:g}"
        return self.kind

    def factor_manifolds(self):
        return [sphere(k, r) for k, r in self.factors]

    def _blocks(self, x):
        b = self.block_starts
        return [x[..., b[i]:b[i + 1]] for i in range(len(self.factors))]

    def _join(self, parts):
        return np.concatenate(parts, axis=-1)

    # -- ambient geometry -------------------------------------------------

    def distance_to(self, x):
        x = np.asarray(x, dtype=float)
        sq = 0.0
        for blk, (_, r) in zip(self._blocks(x), self.factors):
            sq = sq + (np.linalg.norm(blk, axis=-1) - r) ** 2
        return np.sqrt(sq)

    def contains(self, x, tol=ON_MANIFOLD_TOL):
        return bool(np.all(self.distance_to(x) <= tol))

    def normal_projection(self, x, check=True):
        """Closest point on the manifold (factorwise radial normalization)."""
        x = np.asarray(x, dtype=float)
        if check:
            dist = self.distance_to(x)
            if np.any(~(dist < self.tube_epsilon)):
                raise OutsideTube(
                    f"point at distance {float(np.max(dist)):.6g} outside tube "
                    f"of radius {self.tube_epsilon:g}"
                )
        parts = []
        for blk, (_, r) in zip(self._blocks(x), self.factors):
            parts.append(r * blk / np.linalg.norm(blk, axis=-1, keepdims=True))
        return self._join(parts)

    project = normal_projection

    # -- intrinsic geometry -------------------------------------------------

    def tangent_component(self, x, v):
        parts = []
        for bx, bv, (_, r) in zip(self._blocks(x), self._blocks(v), self.factors):
            n = bx / np.linalg.norm(bx, axis=-1, keepdims=True)
            parts.append(bv - (bv * n).sum(-1, keepdims=True) * n)
        return self._join(parts)

    def exp(self, x, v, check=True):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if check:
            normal = v - self.tangent_component(x, v)
            scale = np.maximum(1.0, np.linalg.norm(v, axis=-1))
            if np.any(np.linalg.norm(normal, axis=-1) > TANGENT_TOL * scale):
                raise NotTangent("vector is not tangent to the manifold at the base point")
        x, v = np.broadcast_arrays(x, v)
        parts = [
            _sphere_exp(bx, bv, r)
            for bx, bv, (_, r) in zip(self._blocks(x), self._blocks(v), self.factors)
        ]
        return self._join(parts)

    def log(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        parts = [
            _sphere_log(bx, by, r)
            for bx, by, (_, r) in zip(self._blocks(x), self._blocks(y), self.factors)
        ]
        return self._join(parts)

    def factor_distances(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = []
        for bx, by, (_, r) in zip(self._blocks(x), self._blocks(y), self.factors):
            xh = bx / np.linalg.norm(bx, axis=-1, keepdims=True)
            yh = by / np.linalg.norm(by, axis=-1, keepdims=True)
            out.append(r * _sphere_angle(xh, yh))
        return np.stack(out, axis=-1)

    def geodesic_distance(self, x, y):
        return np.sqrt((self.factor_distances(x, y) ** 2).sum(-1))

    def tangent_frame(self, x):
        """Oriented orthonormal tangent rows, shape (..., d, m).

        Each sphere factor uses the frame with the outward normal last in a
        positively oriented ambient frame; factors are concatenated in order.
        """
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.d, self.m))
        row = 0
        b = self.block_starts
        for i, (k, _) in enumerate(self.factors):
            out[..., row:row + k, b[i]:b[i + 1]] = _sphere_frame(x[..., b[i]:b[i + 1]])
            row += k
        return out

    def random_points(self, n, rng):
        parts = []
        for k, r in self.factors:
            g = rng.standard_normal((n, k + 1))
            parts.append(r * g / np.linalg.norm(g, axis=1, keepdims=True))
        return np.concatenate(parts, axis=1)

    def poles(self):
        """The point whose factors are all at their last-axis pole."""
        parts = []
        for k, r in self.factors:
            e = np.zeros(k + 1)
            e[-1] = r
            parts.append(e)
        return np.concatenate(parts)


def sphere(d, radius=1.0, tube_epsilon=None):
    if d < 1:
        raise UnsupportedManifold("sphere dimension must be at least 1")
    radius = float(radius)
    return EmbeddedManifold(
        kind="sphere",
        factors=((int(d), radius),),
        tube_epsilon=0.5 * radius if tube_epsilon is None else float(tube_epsilon),
        injectivity_radius=math.pi * radius,
    )


def clifford_torus(tube_epsilon=0.35):
    r = 1.0 / math.sqrt(2.0)
    return EmbeddedManifold(
        kind="clifford",
        factors=((1, r), (1, r)),
        tube_epsilon=float(tube_epsilon),
        injectivity_radius=math.pi * r,
    )


def s3xs3(tube_epsilon=0.5):
    return EmbeddedManifold(
        kind="s3xs3",
        factors=((3, 1.0), (3, 1.0)),
        tube_epsilon=float(tube_epsilon),
        injectivity_radius=math.pi,
    )


def parse_manifold(spec: str) -> EmbeddedManifold:
    """Parse ``sphere:d=2,r=1``, ``clifford`` or ``s3xs3``."""
    spec = spec.strip()
    name, _, params = spec.partition(":")
    name = name.strip().lower()
    kv = {}
    if params:
        for tok in params.split(","):
            key, eq, val = tok.partition("=")
            if not eq:
                raise UnsupportedManifold(f"bad manifold parameter {tok!r} in {spec!r}")
            kv[key.strip()] = val.strip()
    try:
        if name == "sphere":
            return sphere(int(kv.get("d", 2)), float(kv.get("r", 1.0)))
        if name in ("clifford", "clifford_torus", "torus"):
            return clifford_torus()
        if name in ("s3xs3", "product_spheres"):
            return s3xs3()
    except ValueError as exc:
        raise UnsupportedManifold(f"bad manifold id {spec!r}: {exc}") from None
    raise UnsupportedManifold(f"unsupported manifold {spec!r}")


# --------------------------------------------------------------------------
# fullness of simplices on the manifold
# --------------------------------------------------------------------------


def _as_vertices(s):
    return s.vertices if isinstance(s, Simplex) else np.asarray(s, dtype=float)


def cell_geodesic_diameters(manifold, pts):
    """Max pairwise geodesic distance per cell for (c, p, m) points."""
    c, p, _ = pts.shape
    out = np.zeros(c)
    for i in range(p):
        for j in range(i + 1, p):
            np.maximum(out, manifold.geodesic_distance(pts[:, i], pts[:, j]), out=out)
    return out


def internal_fullness_batch(manifold, pts, check=True):
    """Internal fullness of (c, k+1, m) simplices via log at vertex 0.

    Signed by the tangent frame at vertex 0 when k equals the manifold
    dimension.
    """
    pts = np.asarray(pts, dtype=float)
    if check:
        diam = cell_geodesic_diameters(manifold, pts)
        if np.any(diam >= manifold.injectivity_radius):
            bad = int(np.argmax(diam))
            raise InjectivityRadiusExceeded(
                f"cell {bad} has diameter {diam[bad]:.6g} >= injectivity radius "
                f"{manifold.injectivity_radius:.6g}"
            )
    x0 = pts[:, 0, :]
    frame = manifold.tangent_frame(x0)
    logs = manifold.log(x0[:, None, :], pts[:, 1:, :])
    coords = np.einsum("cjm,cdm->cjd", logs, frame)
    k = pts.shape[1] - 1
    pulled = np.concatenate([np.zeros((pts.shape[0], 1, manifold.d)), coords], axis=1)
    if k == manifold.d:
        eye = np.broadcast_to(np.eye(k), (pts.shape[0], k, k))
        return kernels.fullness(pulled, signed_frames=eye)
    return kernels.fullness(pulled)


def ambient_fullness_batch(manifold, pts):
    pts = np.asarray(pts, dtype=float)
    k = pts.shape[1] - 1
    if k == manifold.d:
        frame = manifold.tangent_frame(pts[:, 0, :])
        return kernels.fullness(pts, signed_frames=frame)
    return kernels.fullness(pts)


def internal_fullness(manifold, s) -> float:
    return float(internal_fullness_batch(manifold, _as_vertices(s)[None])[0])


def ambient_fullness(manifold, s) -> float:
    return float(ambient_fullness_batch(manifold, _as_vertices(s)[None])[0])


def secant_plane_projection_dilatation(manifold, s) -> float:
    """Dilatation of the orthogonal projection secant plane -> T_{v0}M."""
    v = _as_vertices(s)
    if v.shape[0] - 1 != manifold.d:
        raise DegenerateSimplex("need a d-simplex on the d-manifold")
    if cell_geodesic_diameters(manifold, v[None])[0] >= manifold.injectivity_radius:
        raise InjectivityRadiusExceeded("simplex diameter exceeds injectivity radius")
    if Simplex(v).is_degenerate:
        raise DegenerateSimplex("simplex is degenerate")
    base = v[1:] - v[0]
    q, _ = np.linalg.qr(base.T)
    frame = manifold.tangent_frame(v[0])
    return linear_dilatation(frame @ q)


def exp_bilipschitz_constant(manifold, x, delta, n_radii=12, n_angles=240, seed=0):
    """Measured bilipschitz constant of exp_x on the tangent ball of radius delta.

    Points are a polar grid in a 2-plane of T_xM (the full ball for surfaces)
    plus random points of the ball; every pair is compared.
    """
    rng = np.random.default_rng(seed)
    frame = manifold.tangent_frame(np.asarray(x, dtype=float))
    radii = delta * np.linspace(1.0 / n_radii, 1.0, n_radii)
    angles = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    plane = np.stack(
        [np.outer(radii, np.cos(angles)).ravel(), np.outer(radii, np.sin(angles)).ravel()],
        axis=1,
    )
    if manifold.d == 1:
        coords = delta * np.linspace(-1.0, 1.0, 2 * n_radii + 1)[:, None]
    else:
        coords = np.zeros((plane.shape[0], manifold.d))
        coords[:, :2] = plane
    if manifold.d > 2:
        g = rng.standard_normal((n_angles * 2, manifold.d))
        g *= (delta * rng.uniform(0, 1, (len(g), 1)) ** (1 / manifold.d)) / np.linalg.norm(
            g, axis=1, keepdims=True
        )
        coords = np.concatenate([coords, g])
    tangent = coords @ frame
    pts = manifold.exp(x, tangent, check=False)
    lo, hi = np.inf, 0.0
    n = len(coords)
    for i in range(n - 1):
        dt = np.linalg.norm(coords[i + 1:] - coords[i], axis=1)
        dm = manifold.geodesic_distance(pts[i], pts[i + 1:])
        ratio = dm / dt
        lo = min(lo, float(ratio.min()))
        hi = max(hi, float(ratio.max()))
    return max(hi, 1.0 / lo)
