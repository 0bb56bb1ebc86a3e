"""Simplices, fullness, affine maps between simplices and their dilatation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSource, DimensionMismatch, SingularMap
from .geom import Shape

RANK_TOL = 1e-10
INVERTIBLE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Simplex:
    """A map {0..k} -> R^m given by its ordered vertex rows."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("simplex vertices need shape (k+1, m)")
        if v.shape[0] - 1 > v.shape[1]:
            raise DimensionMismatch(
                f"a {v.shape[0] - 1}-simplex does not fit in R^{v.shape[1]}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self):
        return self.vertices.shape[0] - 1

    @property
    def ambient_dim(self):
        return self.vertices.shape[1]

    @property
    def base_vectors(self):
        return self.vertices[1:] - self.vertices[0]

    @property
    def diameter(self):
        v = self.vertices
        return float(np.sqrt(((v[:, None] - v[None]) ** 2).sum(-1)).max())

    @property
    def is_degenerate(self):
        if self.dim == 0:
            return False
        sv = np.linalg.svd(self.base_vectors, compute_uv=False)
        if sv[0] == 0.0:
            return True
        return bool(sv[-1] <= RANK_TOL * sv[0])

    def orientation(self, frame=None):
        """+1/-1 for top-dimensional simplices, 0 when degenerate.

        ``frame`` (d, m) expresses the base vectors in an oriented d-frame;
        without it the simplex must be top-dimensional in R^m.
        """
        if self.is_degenerate:
            return 0
        base = self.base_vectors
        if frame is not None:
            frame = np.asarray(frame, dtype=float)
            if frame.shape[0] != self.dim:
                raise DimensionMismatch("frame dimension differs from simplex dimension")
            base = base @ frame.T
        elif self.dim != self.ambient_dim:
            raise DimensionMismatch("orientation needs a top-dimensional simplex or a frame")
        return int(np.sign(np.linalg.det(base)))


def simplex_volume(s: Simplex) -> float:
    if s.dim == 0:
        return 1.0
    if s.is_degenerate:
        return 0.0
    g = s.base_vectors @ s.base_vectors.T
    return float(math.sqrt(max(np.linalg.det(g), 0.0)) / math.factorial(s.dim))


def fullness(s: Simplex) -> float:
    """Unsigned fullness vol / diam^k."""
    if s.dim == 0:
        return 1.0
    vol = simplex_volume(s)
    if vol == 0.0:
        return 0.0
    return vol / s.diameter**s.dim


def fullness_signed(s: Simplex, orientation_frame=None) -> float:
    """Fullness, signed by orientation in the top-dimensional case.

    The sign is taken in ``orientation_frame`` when its dimension equals the
    simplex dimension, or in R^m when the simplex is top-dimensional there.
    Otherwise the unsigned value is returned.
    """
    val = fullness(s)
    if val == 0.0:
        return 0.0
    if orientation_frame is not None:
        frame = np.asarray(orientation_frame, dtype=float)
        if frame.shape[0] != s.dim:
            return val
        return val * s.orientation(frame)
    if s.dim == s.ambient_dim:
        return val * s.orientation()
    return val


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> linear @ x + offset."""

    linear: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float)
        off = np.array(self.offset, dtype=float).reshape(-1)
        if lin.ndim != 2 or lin.shape[0] != lin.shape[1] or off.shape[0] != lin.shape[0]:
            raise DimensionMismatch("affine map needs a square linear part and matching offset")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "offset", off)

    @property
    def d(self):
        return self.linear.shape[0]

    @property
    def invertible(self):
        norm = np.linalg.norm(self.linear, 2)
        return bool(abs(np.linalg.det(self.linear)) > INVERTIBLE_TOL * norm**self.d)

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.linear.T + self.offset

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self after other."""
        return AffineMap(self.linear @ other.linear, self.linear @ other.offset + self.offset)


def affine_map_between(src: Simplex, dst: Simplex) -> AffineMap:
    """The unique affine map sending src.vertices[i] to dst.vertices[i]."""
    d = src.ambient_dim
    if src.dim != d or dst.dim != d or dst.ambient_dim != d:
        raise DimensionMismatch("affine_map_between needs top-dimensional simplices in one R^d")
    if src.is_degenerate:
        raise DegenerateSource("source simplex is degenerate")
    bs = src.base_vectors.T
    bd = dst.base_vectors.T
    lin = np.linalg.solve(bs.T, bd.T).T
    return AffineMap(lin, dst.vertices[0] - lin @ src.vertices[0])


def linear_dilatation(a) -> float:
    """Ratio of extreme singular values of the linear part."""
    lin = a.linear if isinstance(a, AffineMap) else np.asarray(a, dtype=float)
    if isinstance(a, AffineMap) and not a.invertible:
        raise SingularMap("affine map is not invertible")
    sv = np.linalg.svd(lin, compute_uv=False)
    if sv[-1] <= INVERTIBLE_TOL * sv[0]:
        raise SingularMap("linear map is not invertible")
    return float(sv[0] / sv[-1])


def reference_simplex(reference: Shape) -> Simplex:
    s = Simplex(reference.canonical.points)
    if s.dim != s.ambient_dim:
        raise DimensionMismatch("reference shape must have d+1 points in R^d")
    if s.orientation() <= 0:
        raise ValueError("reference shape must be non-degenerate and positively oriented")
    return s


def affine_ellipticity(s: Simplex, reference: Shape) -> float:
    """Dilatation of the affine map from the reference simplex onto ``s``.

    Returns ``inf`` when ``s`` is negatively oriented or degenerate.
    """
    ref = reference_simplex(reference)
    if s.dim != ref.dim or s.ambient_dim != ref.ambient_dim:
        raise DimensionMismatch("simplex and reference shape differ in size")
    if s.orientation() <= 0:
        return math.inf
    return linear_dilatation(affine_map_between(ref, s))


def linear_dilatations(linear):
    """Vectorized sigma_max/sigma_min over a stack (c, d, d); inf when singular."""
    sv = np.linalg.svd(np.asarray(linear, dtype=float), compute_uv=False)
    with np.errstate(divide="ignore"):
        return np.where(sv[:, -1] > INVERTIBLE_TOL * sv[:, 0], sv[:, 0] / sv[:, -1], np.inf)
