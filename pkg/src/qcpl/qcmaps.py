"""Analytic test homeomorphisms and a numerical linear-dilatation estimator.

Maps act on points stored as rows in the ambient space of their domain.
Catalog maps on products of spheres act factor by factor.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .errors import ConfigError, OffManifold, ScheduleTooCoarse
from .geom import (
    MoebiusTransform,
    Rotation,
    Scaling,
    SphereInversion,
    Translation,
    poincare_extension,
)
from .manifolds import EmbeddedManifold, parse_manifold

ON_DOMAIN_TOL = 1e-9


def _householder_to_last(p):
    """Orthogonal Q with Q @ p = e_last for a unit vector p."""
    k = p.shape[0]
    e = np.zeros(k)
    e[-1] = 1.0
    u = p - e
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        return np.eye(k)
    u /= nu
    return np.eye(k) - 2.0 * np.outer(u, u)


class SmoothMap:
    """Base class: a homeomorphism domain -> codomain with analytic evaluation."""

    kind = "map"
    nominal_dilatation: float | None = None
    orientation = 1

    def __init__(self, domain: EmbeddedManifold, codomain: EmbeddedManifold | None = None):
        self.domain = domain
        self.codomain = domain if codomain is None else codomain

    def evaluate(self, x, check=True):
        x = np.asarray(x, dtype=float)
        if check:
            dist = self.domain.distance_to(x)
            if np.any(~(dist <= ON_DOMAIN_TOL)):
                raise OffManifold(
                    f"point at distance {float(np.max(dist)):.3g} from the domain {self.domain.id}"
                )
        return self._eval(x)

    __call__ = evaluate

    def _eval(self, x):
        raise NotImplementedError

    @property
    def orientation_preserving(self):
        return self.orientation > 0

    def __repr__(self):
        return f"{type(self).__name__}({self.expr})"

    @property
    def expr(self):
        return self.kind


class Identity(SmoothMap):
    kind = "id"
    nominal_dilatation = 1.0

    def _eval(self, x):
        return x.copy()


class RotationMap(SmoothMap):
    """x -> R x for an orthogonal R preserving the factor blocks."""

    kind = "rot"
    nominal_dilatation = 1.0

    def __init__(self, domain, matrix, label="rot"):
        super().__init__(domain)
        matrix = np.asarray(matrix, dtype=float)
        m = domain.m
        if matrix.shape != (m, m):
            raise ConfigError(f"rotation must be {m}x{m}")
        if np.abs(matrix @ matrix.T - np.eye(m)).max() > 1e-10:
            raise ConfigError("rotation matrix is not orthogonal")
        b = domain.block_starts
        mask = np.zeros((m, m), dtype=bool)
        for i in range(len(b) - 1):
            mask[b[i]:b[i + 1], b[i]:b[i + 1]] = True
        if np.abs(matrix[~mask]).max(initial=0.0) > 1e-12:
            raise ConfigError("rotation must act blockwise on the sphere factors")
        self.matrix = matrix
        self.orientation = 1 if np.linalg.det(matrix) > 0 else -1
        self._label = label

    @property
    def expr(self):
        return self._label

    def _eval(self, x):
        return x @ self.matrix.T


class Reflection(RotationMap):
    kind = "reflect"


class SphereMoebius(SmoothMap):
    """A Moebius transform of R^d carried to S^d(r) by stereographic projection.

    Stereographic projection from the pole r*e_last onto the equatorial plane
    is the restriction of the inversion about that pole with radius sqrt2*r,
    so the map is that inversion, the Poincare extension of ``mu``, and the
    inversion again. Every step is a Moebius map of R^{d+1}, which keeps the
    evaluation exact near the pole.
    """

    kind = "mob"
    nominal_dilatation = 1.0

    def __init__(self, domain, mu: MoebiusTransform, label="mob"):
        super().__init__(domain)
        if domain.kind != "sphere":
            raise ConfigError("sphere Moebius maps need a sphere domain")
        (d, r), = domain.factors
        if mu.d != d:
            raise ConfigError(f"Moebius transform on R^{mu.d} for S^{d}")
        pole = np.zeros(d + 1)
        pole[-1] = r
        inv = SphereInversion(pole, math.sqrt(2.0) * r)
        self.mu = mu
        self.lifted = MoebiusTransform(d + 1, (inv,) + poincare_extension(mu).word + (inv,))
        self.orientation = 1 if mu.orientation_preserving else -1
        self._label = label

    @property
    def expr(self):
        return self._label

    def _eval(self, x):
        y = self.lifted.apply_array(x.reshape(-1, x.shape[-1]))
        r = self.domain.radii[0]
        y = r * y / np.linalg.norm(y, axis=1, keepdims=True)
        return y.reshape(x.shape)


class RadialStretch(SmoothMap):
    """z -> z |z|^(s-1) in stereographic coordinates, fixing a pole pair.

    With alpha the angle from the fixed point -pole, stereographic radius is
    tan(alpha/2), so the map sends alpha to 2 atan(tan(alpha/2)^s) and keeps
    the direction around the pole axis.
    """

    kind = "stretch"

    def __init__(self, domain, s, pole=None):
        super().__init__(domain)
        if domain.kind != "sphere":
            raise ConfigError("radial stretch needs a sphere domain")
        if not s >= 1.0:
            raise ConfigError("stretch exponent must be >= 1")
        (d, _), = domain.factors
        self.s = float(s)
        self.nominal_dilatation = self.s
        if pole is None:
            pole = np.zeros(d + 1)
            pole[-1] = 1.0
        pole = np.asarray(pole, dtype=float)
        if pole.shape != (d + 1,) or np.linalg.norm(pole) == 0:
            raise ConfigError(f"stretch pole must be a nonzero vector in R^{d + 1}")
        self.pole = pole / np.linalg.norm(pole)
        self._q = _householder_to_last(self.pole)

    @property
    def expr(self):
        return f"stretch:s={self.s:g}"

    def _eval(self, x):
        r = self.domain.radii[0]
        xh = (x / r) @ self._q.T
        head = xh[..., :-1]
        rho = np.linalg.norm(head, axis=-1, keepdims=True)
        alpha = np.arctan2(rho, -xh[..., -1:])
        alpha2 = 2.0 * np.arctan(np.tan(0.5 * alpha) ** self.s)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(rho > 0, head / np.where(rho > 0, rho, 1.0), 0.0)
        out = np.concatenate([np.sin(alpha2) * u, -np.cos(alpha2)], axis=-1)
        return r * (out @ self._q)


class ProductMap(SmoothMap):
    """Factorwise map on a product; nominal dilatation is not tracked."""

    kind = "product"

    def __init__(self, domain, maps):
        super().__init__(domain)
        factors = tuple(f for mp in maps for f in mp.domain.factors)
        if factors != tuple(domain.factors):
            raise ConfigError("factor maps do not match the product domain")
        self.maps = list(maps)
        self.orientation = int(np.prod([mp.orientation for mp in maps]))
        self.nominal_dilatation = None
        if all(isinstance(mp, (Identity, RotationMap, SphereMoebius)) for mp in maps):
            self.nominal_dilatation = 1.0 if all(
                mp.nominal_dilatation == 1.0 for mp in maps
            ) else None
        self._starts = np.cumsum([0] + [mp.domain.m for mp in maps])

    @property
    def expr(self):
        return "product(" + ",".join(mp.expr for mp in self.maps) + ")"

    def _eval(self, x):
        s = self._starts
        return np.concatenate(
            [mp._eval(x[..., s[i]:s[i + 1]]) for i, mp in enumerate(self.maps)], axis=-1
        )


class Composition(SmoothMap):
    """compose([a, b]) is a after b."""

    kind = "compose"

    def __init__(self, maps):
        maps = list(maps)
        if not maps:
            raise ConfigError("empty composition")
        super().__init__(maps[-1].domain, maps[0].codomain)
        self.maps = maps
        self.orientation = int(np.prod([mp.orientation for mp in maps]))
        noms = [mp.nominal_dilatation for mp in maps]
        self.nominal_dilatation = None if any(n is None for n in noms) else float(np.prod(noms))

    @property
    def expr(self):
        return "compose(" + ",".join(mp.expr for mp in self.maps) + ")"

    def _eval(self, x):
        for mp in reversed(self.maps):
            x = mp._eval(x)
        return x


# --------------------------------------------------------------------------
# expression parser
# --------------------------------------------------------------------------

_KINDS = ("id", "rot", "reflect", "stretch", "mob", "compose", "product")
_HEAD = re.compile(r"^(id|rot|reflect|stretch|mob)(:|$)|^(compose|product)\(")
_AXES = {"x": 0, "y": 1, "z": 2, "w": 3}


def _split_top(text):
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ConfigError(f"unbalanced parentheses in {text!r}")
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise ConfigError(f"unbalanced parentheses in {text!r}")
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def _split_args(text):
    """Top-level comma split, re-joining parameter pieces to their map."""
    args = []
    for piece in _split_top(text):
        if _HEAD.match(piece) or not args:
            args.append(piece)
        else:
            args[-1] += "," + piece
    return args


def _vector(val, n):
    vals = [float(v) for v in val.split(";") if v.strip()]
    if len(vals) == 1:
        return np.full(n, vals[0])
    if len(vals) != n:
        raise ConfigError(f"expected {n} components in {val!r}")
    return np.array(vals)


def _kv(tokens):
    out, flags = {}, []
    for tok in tokens:
        if not tok:
            continue
        key, eq, val = tok.partition("=")
        if eq:
            out[key.strip()] = val.strip()
        else:
            flags.append(tok.strip())
    return out, flags


def _axis_index(name, k):
    if name.isdigit():
        i = int(name)
    elif name in _AXES:
        i = _AXES[name]
    else:
        raise ConfigError(f"unknown axis {name!r}")
    if i >= k:
        raise ConfigError(f"axis {name!r} out of range for R^{k}")
    return i


def _plane_rotation(k, kv):
    """Rotation of R^k by ``angle`` in a coordinate plane.

    ``axis=z`` rotates the (x, y) plane (the axis of R^3), ``plane=i;j``
    names the plane directly. Circles rotate in their only plane.
    """
    angle = float(kv.get("angle", 0.0))
    if k == 2:
        i, j = 0, 1
    elif "plane" in kv:
        i, j = (int(v) for v in kv["plane"].split(";"))
    else:
        a = _axis_index(kv.get("axis", "z"), k)
        others = [t for t in range(k) if t != a][:2]
        i, j = others
        if k == 3 and a == 1:
            i, j = 2, 0
    if i == j or max(i, j) >= k:
        raise ConfigError("bad rotation plane")
    m = np.eye(k)
    c, s = math.cos(angle), math.sin(angle)
    m[i, i] = m[j, j] = c
    m[i, j], m[j, i] = -s, s
    return m


def _parse_word(params, d):
    word = []
    for gen in params.split("+"):
        tokens = [t.strip() for t in gen.split(",")]
        if not tokens or not tokens[0]:
            continue
        name = tokens[0]
        kv, _ = _kv(tokens[1:])
        if name == "inv":
            word.append(SphereInversion(_vector(kv.get("c", "0"), d), float(kv.get("r", 1.0))))
        elif name == "trans":
            word.append(Translation(_vector(kv.get("v", "0"), d)))
        elif name == "scale":
            word.append(Scaling(float(kv.get("k", 1.0)), d))
        elif name == "rotate":
            word.append(Rotation(_plane_rotation(d, kv)))
        else:
            raise ConfigError(f"unknown Moebius generator {name!r}")
    return MoebiusTransform(d, tuple(word))


def _atom_on_sphere(kind, params, man, text):
    kv, flags = _kv(params.split(",")) if kind != "mob" else ({}, [])
    k = man.m
    if kind == "id":
        return Identity(man)
    if kind == "rot":
        return RotationMap(man, _plane_rotation(k, kv), label=text)
    if kind == "reflect":
        m = np.eye(k)
        m[_axis_index(kv.get("axis", "x"), k), _axis_index(kv.get("axis", "x"), k)] = -1.0
        return Reflection(man, m, label=text)
    if kind == "stretch":
        if "s" not in kv:
            raise ConfigError("stretch needs s=<exponent>")
        pole = _vector(kv["pole"], k) if "pole" in kv else None
        return RadialStretch(man, float(kv["s"]), pole)
    if kind == "mob":
        return SphereMoebius(man, _parse_word(params, man.d), label=text)
    raise ConfigError(f"unknown map kind {kind!r}")


def parse_map(expr: str, manifold) -> SmoothMap:
    """Build a catalog map from an expression such as ``stretch:s=1.5``.

    Atoms: ``id``, ``rot:axis=z,angle=0.7``, ``reflect:axis=x``,
    ``stretch:s=1.5[,pole=0;0;1]`` and ``mob:<gen>+<gen>...`` with generators
    ``inv,c=..,r=..``, ``trans,v=..``, ``scale,k=..``, ``rotate,angle=..``
    (vectors are ``;``-separated, a scalar fills every coordinate).
    ``compose(a,b,...)`` applies the last map first; ``product(a,b)`` acts
    factorwise. On products of spheres an atom acts on every factor, except
    ``reflect`` which only reflects the first factor.
    """
    if isinstance(manifold, str):
        manifold = parse_manifold(manifold)
    expr = expr.strip()
    try:
        return _parse(expr, manifold)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad map expression {expr!r}: {exc}") from None


def _parse(expr, man):
    m = re.match(r"^(compose|product)\((.*)\)$", expr, re.S)
    if m:
        args = _split_args(m.group(2))
        if m.group(1) == "compose":
            return Composition([_parse(a, man) for a in args])
        fms = man.factor_manifolds()
        if len(args) != len(fms):
            raise ConfigError(f"product needs {len(fms)} factor maps, got {len(args)}")
        return ProductMap(man, [_parse(a, f) for a, f in zip(args, fms)])
    kind, _, params = expr.partition(":")
    kind = kind.strip()
    if kind not in _KINDS:
        raise ConfigError(f"unknown map kind {kind!r} in {expr!r}")
    if len(man.factors) == 1:
        return _atom_on_sphere(kind, params, man, expr)
    if kind == "id":
        return Identity(man)
    fms = man.factor_manifolds()
    maps = []
    for i, f in enumerate(fms):
        if kind == "reflect" and i > 0:
            maps.append(Identity(f))
        else:
            maps.append(_atom_on_sphere(kind, params, f, expr))
    return ProductMap(man, maps)


# --------------------------------------------------------------------------
# dilatation estimation
# --------------------------------------------------------------------------


@dataclass
class DilatationEstimate:
    pointwise_max: float
    at_point: np.ndarray
    radius_schedule: list
    samples_per_sphere: int
    per_radius_values: list
    per_point: np.ndarray | None = field(default=None, repr=False)


def radius_schedule(r0, k):
    if k < 3:
        raise ScheduleTooCoarse(f"schedule needs K >= 3 radii beyond r0, got K={k}")
    return [r0 * 2.0**-i for i in range(k + 1)]


def unit_directions(d, n, seed=0):
    """Deterministic, low-discrepancy unit vectors of R^d."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        off = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi / n)
        t = off + 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    u = qmc.Halton(d, scramble=True, seed=seed).random(n)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def pointwise_dilatations(f: SmoothMap, points, r0=0.01, k=6, n=64, seed=0):
    """Per-point, per-radius ratios sup/inf of image distances, shape (p, K+1)."""
    radii = radius_schedule(r0, k)
    man = f.domain
    if not r0 < 0.5 * man.injectivity_radius:
        raise ConfigError("r0 must be below half the injectivity radius")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dirs = unit_directions(man.d, n, seed)
    frames = man.tangent_frame(pts)  # (p, d, m)
    tang = np.einsum("nd,pdm->pnm", dirs, frames)  # (p, n, m)
    fx = f.evaluate(pts)
    out = np.empty((len(pts), len(radii)))
    for j, r in enumerate(radii):
        y = man.exp(pts[:, None, :], r * tang, check=False)
        fy = f._eval(y.reshape(-1, man.m)).reshape(y.shape[0], y.shape[1], -1)
        dist = f.codomain.geodesic_distance(fx[:, None, :], fy)
        with np.errstate(divide="ignore"):
            out[:, j] = dist.max(axis=1) / dist.min(axis=1)
    return out, radii, len(dirs)


def estimate_pointwise_dilatation(f, x, r0=0.01, k=6, n=64, seed=0) -> DilatationEstimate:
    vals, radii, nd = pointwise_dilatations(f, np.asarray(x)[None], r0, k, n, seed)
    row = vals[0]
    return DilatationEstimate(
        pointwise_max=float(row[-3:].max()),
        at_point=np.asarray(x, dtype=float),
        radius_schedule=radii,
        samples_per_sphere=nd,
        per_radius_values=[float(v) for v in row],
    )


def global_sample_points(man, n_points=200, level=1, seed=0):
    """Vertices of a refined seed plus seeded random points."""
    from .triangulation import refine

    verts = refine(man, level).vertices
    rng = np.random.default_rng(seed)
    return np.concatenate([verts, man.random_points(n_points, rng)])


def estimate_global_dilatation(f, n_points=200, r0=0.01, k=6, n=64, seed=0, level=1,
                               points=None, chunk=2048) -> DilatationEstimate:
    """Max of pointwise estimates over quasi-uniform domain samples."""
    if points is None:
        points = global_sample_points(f.domain, n_points, level, seed)
    rows = []
    for s in range(0, len(points), chunk):
        vals, radii, nd = pointwise_dilatations(f, points[s:s + chunk], r0, k, n, seed)
        rows.append(vals)
    vals = np.concatenate(rows)
    tail = vals[:, -3:].max(axis=1)
    i = int(np.argmax(tail))
    return DilatationEstimate(
        pointwise_max=float(tail[i]),
        at_point=points[i],
        radius_schedule=radii,
        samples_per_sphere=nd,
        per_radius_values=[float(v) for v in vals[i]],
        per_point=tail,
    )


def estimate_bilipschitz(f, n_points=200, radius=0.1, n_pairs=20, seed=0):
    """Measured bilipschitz constant over pairs at geodesic distance <= radius."""
    man = f.domain
    rng = np.random.default_rng(seed)
    x = man.random_points(n_points, rng)
    frames = man.tangent_frame(x)
    coeff = rng.standard_normal((n_points, n_pairs, man.d))
    coeff *= radius * rng.uniform(0.05, 1.0, (n_points, n_pairs, 1)) / np.linalg.norm(
        coeff, axis=-1, keepdims=True
    )
    y = man.exp(x[:, None, :], np.einsum("pnd,pdm->pnm", coeff, frames), check=False)
    d0 = man.geodesic_distance(x[:, None, :], y)
    d1 = f.codomain.geodesic_distance(f.evaluate(x)[:, None, :], f._eval(y.reshape(-1, man.m)).reshape(y.shape))
    ratio = d1 / d0
    return float(max(ratio.max(), 1.0 / ratio.min()))


def random_sphere_moebius(man, rng, n_inversions=2, spread=0.6):
    """A random Moebius map of S^d: inversions, a rotation, a scaling, a shift.

    Parameters stay moderate so the conformal factor varies slowly enough for
    the default radius schedule to resolve it.
    """
    d = man.d
    word = []
    for _ in range(n_inversions):
        word.append(SphereInversion(rng.normal(0.0, spread, d), float(rng.uniform(0.8, 1.5))))
    if d >= 2:
        from .geom import random_rotation

        word.append(Rotation(random_rotation(d, rng)))
    word.append(Scaling(float(rng.uniform(0.7, 1.4)), d))
    word.append(Translation(rng.normal(0.0, 0.3, d)))
    return SphereMoebius(man, MoebiusTransform(d, tuple(word)), label="mob:random")


def random_rotation_map(man, rng):
    from .geom import random_rotation

    blocks = [random_rotation(k + 1, rng) for k, _ in man.factors]
    m = np.zeros((man.m, man.m))
    b = man.block_starts
    for i, blk in enumerate(blocks):
        m[b[i]:b[i + 1], b[i]:b[i + 1]] = blk
    return RotationMap(man, m, label="rot:random")


__all__ = [
    "SmoothMap",
    "Identity",
    "RotationMap",
    "Reflection",
    "SphereMoebius",
    "RadialStretch",
    "ProductMap",
    "Composition",
    "parse_map",
    "DilatationEstimate",
    "radius_schedule",
    "unit_directions",
    "pointwise_dilatations",
    "estimate_pointwise_dilatation",
    "estimate_global_dilatation",
    "estimate_bilipschitz",
    "global_sample_points",
    "random_sphere_moebius",
    "random_rotation_map",
]
