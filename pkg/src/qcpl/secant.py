"""Secant (piecewise linear) approximation of a map along a triangulation.

The secant map sends each source vertex to its image, interpolates
linearly in the ambient space of the target and projects back with the
closest-point map. ``certify`` checks that it is a PL homeomorphism:
every image simplex is small, positively oriented, and the degree is one.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NoRegularValue, OutsideTube
from .manifolds import EmbeddedManifold
from .simplex import linear_dilatations
from .triangulation import colour_ordered, probe_scheme

SMALL_FRACTION = 0.9
REGULAR_MARGIN = 1e-6
MAX_ATTEMPTS = 100
DEFAULT_CHUNK = 50_000


@dataclass(eq=False)
class PLMap:
    """Vertex images of a source triangulation on a target manifold."""

    source: object
    vertex_images: np.ndarray
    target: EmbeddedManifold
    expr: str = ""

    def __post_init__(self):
        self.vertex_images = np.asarray(self.vertex_images, dtype=float)
        if self.vertex_images.shape[0] != self.source.n_vertices:
            raise ValueError("one image per source vertex is required")

    @property
    def d(self):
        return self.source.d

    def ambient(self, cells, bary):
        """F_T at barycentric points: cells (c, d+1), bary (c, q, d+1)."""
        return np.einsum("cqi,cim->cqm", bary, self.vertex_images[cells])

    def evaluate(self, cells, bary):
        """f_T = nu(F_T); raises OutsideTube where F_T leaves the tube."""
        return self.target.normal_projection(self.ambient(cells, bary))


def secant_approximate(f, t, expr=None) -> PLMap:
    images = f.evaluate(t.vertices)
    return PLMap(t, images, f.codomain, expr or f.expr)


# --------------------------------------------------------------------------
# certification
# --------------------------------------------------------------------------


@dataclass
class PLCertificate:
    all_small: bool
    orientation_signs: np.ndarray
    degree: int | None
    is_pl_homeomorphism: bool
    failures: list
    regular_value: np.ndarray | None = None
    max_hull_distance: float = 0.0
    n_cells: int = 0
    n_negative: int = 0
    n_degenerate: int = 0
    n_not_small: int = 0

    def to_dict(self, max_signs=1_000_000):
        signs = self.orientation_signs
        if len(signs) <= max_signs:
            sign_field = [int(s) for s in signs]
        else:
            sign_field = {str(v): int((signs == v).sum()) for v in (-1, 0, 1)}
        return {
            "all_small": bool(self.all_small),
            "orientation_signs": sign_field,
            "degree": None if self.degree is None else int(self.degree),
            "is_pl_homeomorphism": bool(self.is_pl_homeomorphism),
            "failures": [int(i) for i in self.failures],
            "regular_value": None if self.regular_value is None else [
                float(v) for v in self.regular_value
            ],
            "max_hull_distance": float(self.max_hull_distance),
            "n_cells": int(self.n_cells),
            "n_negative": int(self.n_negative),
            "n_degenerate": int(self.n_degenerate),
            "n_not_small": int(self.n_not_small),
        }


def candidate_values(target, n, seed=0, spread=0.1):
    """Deterministic perturbations y_k = exp_{y0}(spread * g_k) of a base point."""
    rng = np.random.default_rng(seed)
    y0 = target.random_points(1, rng)[0]
    frame = target.tangent_frame(y0)
    g = rng.standard_normal((n, target.d))
    g[0] = 0.0
    return target.exp(y0, spread * g @ frame, check=False)


def fiber_barycentric(manifold, pts, y):
    """Barycentric coordinates where the ambient simplex meets the normal fiber of y.

    The fiber over y of the closest-point map of a product of spheres is
    {(t_1 y_1, ..., t_f y_f)}. Solving sum_i lam_i p_i = that point with
    sum lam = 1 is a square system with m + 1 unknowns. Returns (lam, t);
    rows are NaN for singular systems.
    """
    c, p, m = pts.shape
    nf = len(manifold.factors)
    bs = manifold.block_starts
    a = np.zeros((c, m + 1, m + 1))
    a[:, :m, :p] = pts.transpose(0, 2, 1)
    a[:, m, :p] = 1.0
    for j in range(nf):
        blk = y[bs[j]:bs[j + 1]]
        a[:, bs[j]:bs[j + 1], p + j] = -blk / np.linalg.norm(blk)
    rhs = np.zeros((c, m + 1, 1))
    rhs[:, m, 0] = 1.0
    det = np.linalg.det(a)
    ok = np.abs(det) > 1e-13 * np.abs(a).max(axis=(1, 2)) ** (m + 1)
    a[~ok] = np.eye(m + 1)
    sol = np.linalg.solve(a, rhs)[:, :, 0]
    sol[~ok] = np.nan
    return sol[:, :p], sol[:, p:]


def _local_degree(manifold, pts, y, margin, method):
    """(degree, regular) over candidate image simplices pts (c, d+1, m)."""
    if len(pts) == 0:
        return 0, True
    frame = manifold.tangent_frame(y)
    if method == "fiber":
        lam, t = fiber_barycentric(manifold, pts, y)
        radii = manifold.radii
        t_ok = np.all((t > 0) & (np.abs(t - radii) < radii), axis=1)
        base = pts[:, 1:, :] - pts[:, :1, :]
        sign = np.sign(kernels.projected_dets(np.broadcast_to(frame, base.shape), base))
    elif method == "chart":
        # log chart at y; only cells well inside the chart are trusted
        gd = manifold.geodesic_distance(y, pts)
        keep = gd.max(axis=1) < 0.5 * manifold.injectivity_radius
        pts = pts[keep]
        chart = manifold.log(y, pts) @ frame.T
        lam = kernels.origin_barycentric(chart)
        t_ok = np.ones(len(pts), dtype=bool)
        cb = chart[:, 1:, :] - chart[:, :1, :]
        sign = np.sign(np.linalg.det(cb))
    else:
        raise ValueError(f"unknown degree method {method!r}")
    lo = np.nanmin(lam, axis=1) if len(lam) else np.zeros(0)
    finite = np.isfinite(lo) & t_ok
    near = finite & (lo > -margin)
    inside = finite & (lo >= margin)
    if np.any(near & ~inside):
        return None, False
    return int(sign[inside].sum()), True


def _block_diameters(target, pts):
    bs = target.block_starts
    return [
        kernels.vertex_diameters(pts[:, :, bs[j]:bs[j + 1]]) for j in range(len(target.factors))
    ]


def _near_fiber(target, v0, block_diams, y):
    """Cells whose fiber intersection over y is possible.

    A hull point p with nu(p) = y has block j equal to t_j * y_j with
    |t_j - r_j| < tube_epsilon, and block j of p lies within the block
    diameter of block j of vertex 0, so every block of vertex 0 must be
    that close to the segment.
    """
    ok = np.ones(len(v0), dtype=bool)
    bs, eps = target.block_starts, target.tube_epsilon
    for j, (_, r) in enumerate(target.factors):
        yj = y[bs[j]:bs[j + 1]]
        yj = yj / np.linalg.norm(yj)
        vj = v0[:, bs[j]:bs[j + 1]]
        tj = np.clip(vj @ yj, r - eps, r + eps)
        ok &= np.linalg.norm(vj - tj[:, None] * yj, axis=1) <= block_diams[j]
    return ok


def _scan(plmap, ys, chunk, collect_cert=True):
    """One streamed pass over the cells: certificate data and degree candidates.

    Candidates are returned as global cell indices per value in ``ys``.
    """
    target = plmap.target
    bs, radii = target.block_starts, target.radii
    limit = SMALL_FRACTION * target.tube_epsilon
    signs, small, hull = [], [], []
    cand = [[] for _ in ys]
    for start, cells in plmap.source.iter_cells(chunk):
        pts = plmap.vertex_images[cells]
        del cells
        diam = kernels.vertex_diameters(pts)
        if collect_cert:
            hd = kernels.hull_max_distance(pts, bs, radii)
            hull.append(hd)
            small.append(hd < limit)
            frames = target.tangent_frame(pts[:, 0])
            base = pts[:, 1:, :] - pts[:, :1, :]
            det = kernels.projected_dets(frames, base)
            tiny = np.abs(det) <= 1e-14 * np.maximum(diam, 1e-300) ** plmap.d
            signs.append(np.where(tiny, 0, np.sign(det)).astype(np.int8))
        bd = _block_diameters(target, pts)
        for k, y in enumerate(ys):
            near = np.flatnonzero(_near_fiber(target, pts[:, 0, :], bd, y))
            if len(near):
                cand[k].append(start + near)
    cand = [np.concatenate(c) if c else np.zeros(0, dtype=np.int64) for c in cand]
    if not collect_cert:
        return None, None, None, cand
    return np.concatenate(signs), np.concatenate(small), np.concatenate(hull), cand


def _degree_at(plmap, idx, y, margin, method, chunk=DEFAULT_CHUNK):
    """Local degree over candidate cells, evaluated in bounded chunks."""
    total = 0
    for s in range(0, max(len(idx), 1), chunk):
        pts = plmap.vertex_images[plmap.source.cells_at(idx[s:s + chunk])]
        deg, regular = _local_degree(plmap.target, pts, y, margin, method)
        if not regular:
            return None, False
        total += deg
    return total, True


def regular_degrees(plmap, n_values=10, seed=0, margin=REGULAR_MARGIN, method="fiber",
                    chunk=DEFAULT_CHUNK, max_attempts=MAX_ATTEMPTS):
    """Degrees at the first ``n_values`` regular values of the perturbation sequence."""
    ys = candidate_values(plmap.target, max_attempts, seed)
    out = []
    for start in range(0, max_attempts, 16):
        batch = ys[start:start + 16]
        _, _, _, cand = _scan(plmap, batch, chunk, collect_cert=False)
        for y, c in zip(batch, cand):
            deg, regular = _degree_at(plmap, c, y, margin, method, chunk)
            if regular:
                out.append(deg)
                if len(out) == n_values:
                    return out
    if not out:
        raise NoRegularValue(f"no regular value among {max_attempts} perturbations")
    return out


def certify(plmap: PLMap, chunk=DEFAULT_CHUNK, seed=0, margin=REGULAR_MARGIN,
            max_attempts=MAX_ATTEMPTS, method="fiber", batch=16) -> PLCertificate:
    """Smallness, orientation and degree of the secant map."""
    ys = candidate_values(plmap.target, max_attempts, seed)
    signs, small, hull, cand = _scan(plmap, ys[:batch], chunk)
    degree, y_reg = None, None
    start = 0
    while True:
        for k, c in enumerate(cand):
            deg, regular = _degree_at(plmap, c, ys[start + k], margin, method, chunk)
            if regular:
                degree, y_reg = deg, ys[start + k]
                break
        if degree is not None:
            break
        start += batch
        if start >= max_attempts:
            raise NoRegularValue(
                f"no regular value among {max_attempts} perturbations; the mesh is "
                "probably too coarse"
            )
        _, _, _, cand = _scan(plmap, ys[start:start + batch], chunk, collect_cert=False)
    bad = (signs <= 0) | ~small
    all_small = bool(small.all())
    ok = all_small and degree == 1 and bool(np.all(signs > 0))
    return PLCertificate(
        all_small=all_small,
        orientation_signs=signs,
        degree=degree,
        is_pl_homeomorphism=ok,
        failures=np.flatnonzero(bad).tolist(),
        regular_value=y_reg,
        max_hull_distance=float(hull.max()),
        n_cells=int(len(signs)),
        n_negative=int((signs < 0).sum()),
        n_degenerate=int((signs == 0).sum()),
        n_not_small=int((~small).sum()),
    )


# --------------------------------------------------------------------------
# approximation report
# --------------------------------------------------------------------------


@dataclass
class ApproximationReport:
    c0_error: float
    max_affine_ellipticity: float
    mesh_size: float
    level: int
    min_image_fullness: float = math.nan
    n_probe_points: int = 0
    n_cells_probed: int = 0
    n_cells: int = 0

    def to_dict(self):
        out = dict(self.__dict__)
        for k, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return out


def chart_coordinates(manifold, pts):
    """log at vertex 0 in the tangent frame there: (c, d+1, m) -> (c, d, d)."""
    base = pts[:, :1, :]
    v = manifold.log(base, pts[:, 1:, :])
    frame = manifold.tangent_frame(pts[:, 0, :])
    return np.einsum("cim,cdm->cid", v, frame)


def cell_ellipticities(plmap, cells):
    """Affine dilatation from the source chart cell to the image chart cell."""
    src_m = plmap.source.manifold
    s = chart_coordinates(src_m, plmap.source.vertices[cells])
    t = chart_coordinates(plmap.target, plmap.vertex_images[cells])
    # L s_i = t_i for the base rows s_i, t_i
    det_s = np.linalg.det(s)
    ok = np.abs(det_s) > 0
    s_safe = np.where(ok[:, None, None], s, np.eye(s.shape[1]))
    lin = np.linalg.solve(s_safe, t).transpose(0, 2, 1)
    dil = linear_dilatations(lin)
    sign = np.sign(np.linalg.det(lin)) * np.sign(det_s)
    return np.where(ok & (sign > 0), dil, np.inf)


def report(f, plmap: PLMap, probe_depth=2, n_random=1000, seed=0,
           max_probe_points=5_000_000, chunk=500_000) -> ApproximationReport:
    """C0 error against ``f`` and the worst per-cell affine ellipticity.

    Probe points are the vertices of ``probe_depth`` further edgewise
    subdivisions of every cell, with midpoints reprojected as in
    :func:`subdivide`, compared with the PL map at the same barycentric
    coordinates; plus ``n_random`` random points. When the probe set would
    exceed ``max_probe_points`` a seeded sample of cells is probed instead.
    ``chunk`` bounds the probe points handled at once.
    """
    src = plmap.source
    tgt = plmap.target
    rng = np.random.default_rng(seed)
    n_cells = src.n_cells
    groups, bary = probe_scheme(src.d, probe_depth)
    step = max(1, chunk // len(bary))
    max_cells = max(1, max_probe_points // len(bary))
    if n_cells > max_cells:
        chosen = np.sort(rng.choice(n_cells, max_cells, replace=False))
        blocks = (src.cells_at(chosen[s:s + step]) for s in range(0, max_cells, step))
    else:
        blocks = (c for _, c in src.iter_cells(step))
    c0 = 0.0
    ell = 1.0
    min_full = math.inf
    mesh = 0.0
    n_probe = 0
    n_probed = 0
    for cells in blocks:
        spts = src.vertices[cells]
        mesh = max(mesh, float(kernels.vertex_diameters(spts).max()))
        ordered, _ = colour_ordered(src, cells)
        x = _subdivision_points(src.manifold, src.vertices[ordered], groups, len(bary))
        lam = np.broadcast_to(bary, (len(cells),) + bary.shape)
        c0 = max(c0, _c0_on(f, plmap, ordered, lam, x))
        n_probe += len(cells) * len(bary)
        ell = max(ell, float(cell_ellipticities(plmap, cells).max()))
        ipts = plmap.vertex_images[cells]
        frames = tgt.tangent_frame(ipts[:, 0])
        min_full = min(min_full, float(kernels.fullness(ipts, signed_frames=frames).min()))
        n_probed += len(cells)
    if n_random:
        idx = rng.integers(0, n_cells, n_random)
        cells = src.cells_at(idx)
        lam = rng.dirichlet(np.ones(src.d + 1), n_random)[:, None, :]
        x = src.manifold.normal_projection(np.einsum("cqi,cim->cqm", lam, src.vertices[cells]), check=False)
        c0 = max(c0, _c0_on(f, plmap, cells, lam, x))
        n_probe += n_random
    return ApproximationReport(
        c0_error=c0,
        max_affine_ellipticity=ell,
        mesh_size=mesh,
        level=int(src.level),
        min_image_fullness=min_full,
        n_probe_points=n_probe,
        n_cells_probed=n_probed,
        n_cells=int(n_cells),
    )


def _subdivision_points(manifold, verts, groups, n_points):
    c, k, m = verts.shape
    out = np.empty((c, n_points, m))
    out[:, :k] = verts
    for rows in groups:
        mid = 0.5 * (out[:, rows[:, 1]] + out[:, rows[:, 2]])
        if np.any(~(manifold.distance_to(mid) < manifold.reach)):
            raise OutsideTube("probe midpoint beyond the reach; the mesh is too coarse")
        out[:, rows[:, 0]] = manifold.normal_projection(mid, check=False)
    return out


def _c0_on(f, plmap, cells, bary, x):
    """Max geodesic distance between f(x) and the PL map at barycentric ``bary``."""
    fx = f._eval(x.reshape(-1, x.shape[-1])).reshape(x.shape[0], x.shape[1], -1)
    amb = np.einsum("cqi,cim->cqm", bary, plmap.vertex_images[cells])
    dist = plmap.target.distance_to(amb)
    if np.any(~(dist < plmap.target.tube_epsilon)):
        raise OutsideTube("secant image leaves the tube; the mesh is too coarse")
    ft = plmap.target.normal_projection(amb, check=False)
    return float(plmap.target.geodesic_distance(fx, ft).max())


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def run_to_json(cert: PLCertificate | None, rep: ApproximationReport | None, meta: dict,
                indent=2) -> str:
    out = {"meta": meta}
    if cert is not None:
        out["certificate"] = cert.to_dict()
    if rep is not None:
        out["report"] = rep.to_dict()
    return json.dumps(out, indent=indent, sort_keys=True)


CONVERGENCE_COLUMNS = ("level", "mesh_size", "c0_error", "max_ellipticity", "min_fullness")


def convergence_csv(rows, meta=None) -> str:
    """rows: dicts with the convergence columns; meta goes into '#' header lines."""
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = list(CONVERGENCE_COLUMNS) + [k for k in (rows[0] if rows else {}) if k not in CONVERGENCE_COLUMNS]
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


__all__ = [
    "PLMap",
    "PLCertificate",
    "ApproximationReport",
    "secant_approximate",
    "certify",
    "report",
    "regular_degrees",
    "fiber_barycentric",
    "candidate_values",
    "cell_ellipticities",
    "run_to_json",
    "convergence_csv",
]

