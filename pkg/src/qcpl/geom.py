"""Point configurations, similarities, Möbius transformations and shapes.

A Möbius transformation is stored as a word of generators applied left to
right. The point at infinity of the one-point compactification is the
singleton :data:`INFINITY`.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, FullyDegenerate, ParseError

ORTHO_TOL = 1e-10
NORMALIZE_TOL = 1e-12


class _PointAtInfinity:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_PointAtInfinity, ())


INFINITY = _PointAtInfinity()


def is_infinity(x):
    return x is INFINITY


# --------------------------------------------------------------------------
# configurations and similarities
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Configuration:
    """An ordered list of ``r`` points in R^d (repetition allowed)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("configuration needs shape (r, d) with r, d >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("configuration coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def r(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def diameter(self):
        p = self.points
        diff = p[:, None, :] - p[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    @property
    def fully_degenerate(self):
        return self.diameter == 0.0


@dataclass(frozen=True, eq=False)
class Similarity:
    """x -> scale * rotation @ x + translation, with rotation in SO(d)."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(-1)
        d = rot.shape[0]
        if rot.shape != (d, d) or t.shape != (d,):
            raise DimensionMismatch("rotation must be d x d and translation length d")
        if not self.scale > 0:
            raise ValueError("similarity scale must be positive")
        check_rotation(rot)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def d(self):
        return self.rotation.shape[0]

    def apply(self, points):
        pts = np.asarray(points, dtype=float)
        return self.scale * pts @ self.rotation.T + self.translation

    def __call__(self, config: Configuration) -> Configuration:
        if config.d != self.d:
            raise DimensionMismatch(f"similarity acts on R^{self.d}, got R^{config.d}")
        return Configuration(self.apply(config.points))


def check_rotation(rot, tol=ORTHO_TOL):
    d = rot.shape[0]
    if np.abs(rot.T @ rot - np.eye(d)).max() > tol:
        raise ValueError("rotation matrix is not orthogonal")
    if abs(np.linalg.det(rot) - 1.0) > tol:
        raise ValueError("rotation matrix must have determinant +1")


def random_rotation(d, rng):
    """Haar-distributed element of SO(d)."""
    if d == 1:
        return np.ones((1, 1))
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_similarity(d, rng, scale_range=(0.1, 10.0), shift=5.0):
    lo, hi = np.log(scale_range[0]), np.log(scale_range[1])
    return Similarity(
        scale=float(np.exp(rng.uniform(lo, hi))),
        rotation=random_rotation(d, rng),
        translation=rng.uniform(-shift, shift, size=d),
    )


# --------------------------------------------------------------------------
# Möbius transformations
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Translation:
    vector: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vector", np.array(self.vector, dtype=float).reshape(-1))

    @property
    def d(self):
        return self.vector.shape[0]

    def apply(self, x):
        return x + self.vector

    def inverse(self):
        return Translation(-self.vector)


@dataclass(frozen=True, eq=False)
class Scaling:
    factor: float
    d: int

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("scaling factor must be positive")

    def apply(self, x):
        return self.factor * x

    def inverse(self):
        return Scaling(1.0 / self.factor, self.d)


@dataclass(frozen=True, eq=False)
class Rotation:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        check_rotation(m)
        object.__setattr__(self, "matrix", m)

    @property
    def d(self):
        return self.matrix.shape[0]

    def apply(self, x):
        return x @ self.matrix.T

    def inverse(self):
        return Rotation(self.matrix.T)


@dataclass(frozen=True, eq=False)
class SphereInversion:
    """x -> c + rho^2 (x - c) / |x - c|^2, swapping c and infinity."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.array(self.center, dtype=float).reshape(-1))
        if not self.radius > 0:
            raise ValueError("inversion radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def d(self):
        return self.center.shape[0]

    def apply(self, x):
        diff = x - self.center
        sq = (diff**2).sum(-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.center + self.radius**2 * diff / sq

    def inverse(self):
        return self


@dataclass(frozen=True, eq=False)
class MoebiusTransform:
    """A word of generators acting on the one-point compactification of R^d.

    ``word[0]`` is applied first.
    """

    d: int
    word: tuple = field(default=())

    def __post_init__(self):
        word = tuple(self.word)
        for g in word:
            if g.d != self.d:
                raise DimensionMismatch(f"generator acts on R^{g.d}, word is in R^{self.d}")
        object.__setattr__(self, "word", word)

    @classmethod
    def identity(cls, d):
        return cls(d, ())

    def __len__(self):
        return len(self.word)

    @property
    def n_inversions(self):
        return sum(isinstance(g, SphereInversion) for g in self.word)

    @property
    def orientation_preserving(self):
        return self.n_inversions % 2 == 0

    def inverse(self):
        return MoebiusTransform(self.d, tuple(g.inverse() for g in reversed(self.word)))

    def singular_set(self):
        """Finite points sent to infinity (empty if infinity is fixed)."""
        pre = moebius_apply(self.inverse(), INFINITY)
        return [] if is_infinity(pre) else [pre]

    def __call__(self, x):
        return moebius_apply(self, x)

    def apply_array(self, pts):
        """Vectorized evaluation at finite points (n, d).

        Points that pass through a singular value are recomputed one at a
        time with exact infinity handling; rows that end at infinity are
        returned as ``inf``.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        for g in self.word:
            out = g.apply(out)
        bad = ~np.all(np.isfinite(out), axis=1)
        for i in np.flatnonzero(bad):
            y = moebius_apply(self, pts[i])
            out[i] = np.inf if is_infinity(y) else y
        return out


def _apply_generator(g, x):
    if is_infinity(x):
        if isinstance(g, SphereInversion):
            return g.center.copy()
        return INFINITY
    if isinstance(g, SphereInversion):
        diff = x - g.center
        sq = float(diff @ diff)
        if sq == 0.0:
            return INFINITY
        return g.center + g.radius**2 * diff / sq
    return g.apply(x)


def moebius_apply(mu: MoebiusTransform, x):
    """Apply ``mu`` to a point of R^d or to :data:`INFINITY`."""
    if not is_infinity(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != mu.d:
            raise DimensionMismatch(f"point in R^{x.shape[0]}, transform on R^{mu.d}")
    for g in mu.word:
        x = _apply_generator(g, x)
    return x


def moebius_compose(a: MoebiusTransform, b: MoebiusTransform) -> MoebiusTransform:
    """The transform x -> a(b(x))."""
    if a.d != b.d:
        raise DimensionMismatch(f"cannot compose transforms on R^{a.d} and R^{b.d}")
    return MoebiusTransform(a.d, b.word + a.word)


def poincare_extension(mu: MoebiusTransform) -> MoebiusTransform:
    """Extend ``mu`` to R^{d+1}, acting trivially on the last coordinate."""
    d = mu.d
    word = []
    for g in mu.word:
        if isinstance(g, Translation):
            word.append(Translation(np.append(g.vector, 0.0)))
        elif isinstance(g, Scaling):
            word.append(Scaling(g.factor, d + 1))
        elif isinstance(g, Rotation):
            m = np.eye(d + 1)
            m[:d, :d] = g.matrix
            word.append(Rotation(m))
        else:
            word.append(SphereInversion(np.append(g.center, 0.0), g.radius))
    return MoebiusTransform(d + 1, tuple(word))


# --------------------------------------------------------------------------
# shapes
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Shape:
    """Canonical representative of a similarity class of configurations.

    ``canonical`` has its center of mass at the origin and unit Frobenius
    norm.
    """

    canonical: Configuration
    source_diameter: float

    @property
    def r(self):
        return self.canonical.r

    @property
    def d(self):
        return self.canonical.d

    @property
    def diameter(self):
        return self.canonical.diameter

    def orientation(self):
        """Sign of the base-vector determinant for (d+1)-point shapes in R^d."""
        p = self.canonical.points
        if p.shape[0] != p.shape[1] + 1:
            raise DimensionMismatch("orientation needs d+1 points in R^d")
        return float(np.sign(np.linalg.det(p[1:] - p[0])))


def shape_of(config: Configuration) -> Shape:
    if config.fully_degenerate:
        raise FullyDegenerate("all points of the configuration coincide")
    p = config.points - config.points.mean(axis=0)
    p = p / np.linalg.norm(p)
    return Shape(Configuration(p), config.diameter)


def optimal_rotation(a, b):
    """Rotation R in SO(d) minimizing ||a R^T - b||_F for (r, d) arrays."""
    d = a.shape[1]
    if d == 1:
        return np.ones((1, 1))
    h = a.T @ b
    u, _, vt = np.linalg.svd(h)
    v = vt.T
    fix = np.ones(d)
    fix[-1] = np.sign(np.linalg.det(v @ u.T)) or 1.0
    return (v * fix) @ u.T


def shape_distance(a: Shape, b: Shape) -> float:
    """Procrustes distance over orientation preserving rotations."""
    if a.r != b.r or a.d != b.d:
        raise DimensionMismatch(f"shapes of size ({a.r},{a.d}) and ({b.r},{b.d})")
    pa, pb = a.canonical.points, b.canonical.points
    if np.array_equal(pa, pb):
        return 0.0
    rot = optimal_rotation(pa, pb)
    return float(np.linalg.norm(pa @ rot.T - pb))


# --------------------------------------------------------------------------
# CSV serialization
# --------------------------------------------------------------------------


def dumps_configuration(config: Configuration) -> str:
    buf = io.StringIO()
    buf.write(f"# d={config.d} r={config.r}\n")
    for row in config.points:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def loads_configuration(text: str) -> Configuration:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ParseError("missing '# d=<d> r=<r>' header", 1)
    header = {}
    for tok in lines[0].lstrip("#").split():
        key, _, val = tok.partition("=")
        header[key] = val
    try:
        d, r = int(header["d"]), int(header["r"])
    except (KeyError, ValueError):
        raise ParseError("malformed header, expected '# d=<d> r=<r>'", 1) from None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno) from None
        if len(row) != d:
            raise ParseError(f"expected {d} fields, got {len(row)}", lineno)
        rows.append(row)
    if len(rows) != r:
        raise ParseError(f"expected {r} points, got {len(rows)}", len(lines))
    return Configuration(np.array(rows))


def save_configuration(config, path):
    with open(path, "w") as fh:
        fh.write(dumps_configuration(config))


def load_configuration(path):
    with open(path) as fh:
        return loads_configuration(fh.read())
