"""Oriented simplicial complexes on embedded manifolds.

Cells are index tuples whose order encodes orientation. Refinement is the
edgewise (Freudenthal) subdivision, which cuts a d-cell into 2^d children
through its edge midpoints; midpoints are pushed back onto the manifold by
normal projection.

The edgewise subdivision of a cell depends on its vertex order. Vertices
carry a colour in 0..d with every cell seeing each colour once, and cells
are subdivided in colour order: a shared face is then cut the same way from
both sides, and repeated subdivision produces finitely many shapes. Children
are reordered afterwards to carry the orientation of their parent. Meshes
without a proper colouring fall back to increasing vertex index.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .errors import NotOnManifold, OutsideTube, UnsupportedManifold
from .manifolds import (
    EmbeddedManifold,
    ambient_fullness_batch,
    cell_geodesic_diameters,
    internal_fullness_batch,
    parse_manifold,
)
from .errors import DimensionUnsupported, InjectivityRadiusExceeded, ParseError

DEFAULT_CHUNK = 200_000


# --------------------------------------------------------------------------
# orientation-flipping reorderings and the edgewise template
# --------------------------------------------------------------------------


def flip_permutation(d):
    """Vertex reordering of a d-cell that reverses orientation."""
    if d % 4 in (1, 2):
        return tuple(range(d, -1, -1))
    if d % 2 == 1:
        return tuple(range(1, d + 1)) + (0,)
    # no odd dihedral element exists when d % 4 == 0
    return tuple(range(d - 1)) + (d, d - 1)


def _bary_point(pair, d):
    lam = np.zeros(d + 1)
    lam[pair[0]] += 0.5
    lam[pair[1]] += 0.5
    return lam[1:]


@functools.lru_cache(maxsize=None)
def edgewise_template(d):
    """Children of the edgewise subdivision of a d-simplex.

    Returns an int array (2^d, d+1, 2): child vertex j is the midpoint of
    parent vertices (a, b) (a == b for an original vertex). Every child has
    the parent's orientation.
    """
    children = []
    for b in itertools.product((0, 1), repeat=d):
        for perm in itertools.permutations(range(d)):
            y = np.array(b)
            chain = [y]
            for k in perm:
                y = y.copy()
                y[k] += 1
                chain.append(y)
            ok = all(
                v[0] <= 2 and all(v[i] >= v[i + 1] for i in range(d - 1)) and v[-1] >= 0
                for v in chain
            )
            if not ok:
                continue
            child = []
            for v in chain:
                yy = np.concatenate([[2], v, [0]])
                lam = yy[:-1] - yy[1:]
                idx = np.repeat(np.arange(d + 1), lam)
                child.append((int(idx[0]), int(idx[1])))
            children.append(child)
    flip = flip_permutation(d)
    out = []
    for child in children:
        pts = np.array([_bary_point(p, d) for p in child])
        if np.linalg.det((pts[1:] - pts[0]).T) < 0:
            child = [child[i] for i in flip]
        out.append(child)
    out.sort()
    return np.array(out, dtype=np.int64)


# --------------------------------------------------------------------------
# complexes
# --------------------------------------------------------------------------


@dataclass(eq=False)
class Triangulation:
    """Vertex coordinates (n, m) and oriented cells (c, d+1)."""

    vertices: np.ndarray
    cells: np.ndarray
    manifold: EmbeddedManifold | None = None
    level: int = 0
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = np.asarray(self.cells, dtype=np.int64)
        if self.cells.ndim != 2:
            raise ValueError("cells must be a 2-D index array")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.int64)

    @property
    def d(self):
        return self.cells.shape[1] - 1

    @property
    def m(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    def iter_cells(self, chunk=DEFAULT_CHUNK):
        for start in range(0, self.n_cells, chunk):
            yield start, self.cells[start:start + chunk]

    def cell_points(self, cells=None):
        cells = self.cells if cells is None else cells
        return self.vertices[cells]

    def cells_at(self, idx):
        return self.cells[np.asarray(idx, dtype=np.int64)]


class ProductTriangulation:
    """Staircase product of two triangulations, generated lazily.

    A product cell is a pair of factor cells and a monotone lattice path
    (a shuffle) through their vertex grid, taken in increasing vertex index.
    Cells whose combined parity is odd are reordered by
    :func:`flip_permutation` so every product cell carries the product
    orientation.
    """

    def __init__(self, a: Triangulation, b: Triangulation, manifold=None, level=None):
        self.a = a
        self.b = b
        if manifold is None and a.manifold is not None and b.manifold is not None:
            ma, mb = a.manifold, b.manifold
            manifold = EmbeddedManifold(
                kind="product",
                factors=ma.factors + mb.factors,
                tube_epsilon=min(ma.tube_epsilon, mb.tube_epsilon),
                injectivity_radius=min(ma.injectivity_radius, mb.injectivity_radius),
            )
        self.manifold = manifold
        self.level = a.level if level is None else level
        # staircases need a consistent vertex order on each factor, so factor
        # cells are put in colour order and the orientation is restored per
        # product cell
        self.paths, self.path_signs = shuffle_paths(a.d, b.d)
        self._a_key = _order_key(a)
        self._b_key = _order_key(b)
        self._b_sorted, self._b_sign = _sorted_with_sign(b.cells, self._b_key)
        na, nb = a.n_vertices, b.n_vertices
        ia, ib = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
        self.vertices = np.concatenate(
            [a.vertices[ia.ravel()], b.vertices[ib.ravel()]], axis=1
        )
        # along a staircase the factor colours step up one at a time
        self.colors = None
        if self._a_key is not None and self._b_key is not None:
            self.colors = (self._a_key[ia] + self._b_key[ib]).ravel()
        self._cells = None

    @property
    def d(self):
        return self.a.d + self.b.d

    @property
    def m(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.a.n_cells * self.b.n_cells * len(self.paths)

    def _block(self, a_cells):
        paths, psign = self.paths, self.path_signs
        ii, jj = paths[:, :, 0], paths[:, :, 1]
        nb = self.b.n_vertices
        a_sorted, a_sign = _sorted_with_sign(a_cells, self._a_key)
        ga = a_sorted[:, ii]  # (ca, P, d+1)
        gb = self._b_sorted[:, jj]  # (cb, P, d+1)
        out = ga[:, None, :, :] * nb + gb[None, :, :, :]
        sign = a_sign[:, None, None] * self._b_sign[None, :, None] * psign[None, None, :]
        out = out.reshape(-1, self.d + 1)
        neg = sign.reshape(-1) < 0
        out[neg] = out[neg][:, list(flip_permutation(self.d))]
        return out

    def cells_at(self, idx):
        """Cells by global index without materializing the complex."""
        idx = np.asarray(idx, dtype=np.int64)
        npath = len(self.paths)
        p = idx % npath
        ab = idx // npath
        ib = ab % self.b.n_cells
        ia = ab // self.b.n_cells
        a_sorted, a_sign = _sorted_with_sign(self.a.cells[ia], self._a_key)
        rows = np.arange(len(idx))[:, None]
        out = (
            a_sorted[rows, self.paths[p, :, 0]] * self.b.n_vertices
            + self._b_sorted[ib][rows, self.paths[p, :, 1]]
        )
        neg = a_sign * self._b_sign[ib] * self.path_signs[p] < 0
        out[neg] = out[neg][:, list(flip_permutation(self.d))]
        return out

    def iter_cells(self, chunk=DEFAULT_CHUNK):
        per_a = self.b.n_cells * len(self.paths)
        step = max(1, chunk // per_a)
        for s in range(0, self.a.n_cells, step):
            yield s * per_a, self._block(self.a.cells[s:s + step])

    @property
    def cells(self):
        if self._cells is None:
            self._cells = self._block(self.a.cells)
        return self._cells

    def cell_points(self, cells=None):
        cells = self.cells if cells is None else cells
        return self.vertices[cells]

    def materialize(self):
        return Triangulation(self.vertices, self.cells, self.manifold, self.level, self.colors)


@functools.lru_cache(maxsize=None)
def _shuffle_paths_cached(da, db):
    paths, signs = [], []
    for steps in itertools.combinations(range(da + db), da):
        i = j = 0
        path = [(0, 0)]
        for k in range(da + db):
            if k in steps:
                i += 1
            else:
                j += 1
            path.append((i, j))
        # each b-step passed over by a later a-step is one transposition
        inversions = sum(1 for k in range(da + db) if k not in steps for q in steps if q > k)
        paths.append(path)
        signs.append(-1 if inversions % 2 else 1)
    return np.array(paths, dtype=np.int64), np.array(signs, dtype=np.int64)


def shuffle_paths(da, db):
    """Staircase paths (P, da+db+1, 2) through the (da+1) x (db+1) grid and their signs."""
    return _shuffle_paths_cached(da, db)


def _sorted_with_sign(cells, key=None):
    """Cells reordered by ``key[vertex]`` (vertex index if None) and the permutation sign."""
    order = np.argsort(cells if key is None else key[cells], axis=1, kind="stable")
    srt = np.take_along_axis(cells, order, axis=1)
    return srt, np.where(_parity(order) == 1, -1, 1)


def vertex_coloring(cells, n_vertices):
    """Colour vertices 0..d so every cell sees each colour once, or None.

    The colouring is forced across shared faces, so it is found by
    propagation from one cell per connected component.
    """
    cells = np.asarray(cells, dtype=np.int64)
    k = cells.shape[1]
    total = k * (k - 1) // 2
    col = -np.ones(n_vertices, dtype=np.int64)
    while True:
        c = col[cells]
        known = (c >= 0).sum(axis=1)
        todo = known == k - 1
        if not todo.any():
            fresh = np.flatnonzero(known == 0)
            if len(fresh) == 0:
                break
            col[cells[fresh[0]]] = np.arange(k)
            continue
        rows, cc = cells[todo], c[todo]
        slot = np.argmin(cc, axis=1)
        missing = total - np.where(cc >= 0, cc, 0).sum(axis=1)
        target = rows[np.arange(len(rows)), slot]
        col[target] = missing
        # two cells may force different colours on one vertex
        if np.any(col[target] != missing):
            return None
    c = np.sort(col[cells], axis=1)
    if not np.array_equal(c, np.broadcast_to(np.arange(k), c.shape)):
        return None
    return col


def _order_key(t):
    if t.colors is None and isinstance(t, Triangulation):
        t.colors = vertex_coloring(t.cells, t.n_vertices)
    return t.colors


# --------------------------------------------------------------------------
# seeds
# --------------------------------------------------------------------------


def orient_cells(vertices, cells, manifold):
    """Reorder cells so each is positive in the manifold frame at its centroid."""
    pts = vertices[cells]
    center = manifold.normal_projection(pts.mean(axis=1), check=False)
    frame = manifold.tangent_frame(center)
    base = pts[:, 1:, :] - pts[:, :1, :]
    sign = kernels.projected_dets(frame, base)
    flip = np.array(flip_permutation(cells.shape[1] - 1))
    out = cells.copy()
    out[sign < 0] = cells[sign < 0][:, flip]
    return out


def sphere_seed(manifold: EmbeddedManifold) -> Triangulation:
    """Boundary of the (d+1)-cross-polytope on S^d(r)."""
    (d, r), = manifold.factors
    verts = np.zeros((2 * (d + 1), d + 1))
    for i in range(d + 1):
        verts[2 * i, i] = r
        verts[2 * i + 1, i] = -r
    cells = np.array(
        [[2 * i + s[i] for i in range(d + 1)] for s in itertools.product((0, 1), repeat=d + 1)],
        dtype=np.int64,
    )
    colors = np.repeat(np.arange(d + 1), 2)
    return Triangulation(verts, orient_cells(verts, cells, manifold), manifold, 0, colors)


def clifford_seed(manifold: EmbeddedManifold, n=3) -> Triangulation:
    """n x n grid of the flat square torus, diagonally split."""
    if n < 3:
        raise ValueError("clifford torus seed needs n >= 3")
    r = manifold.radii[0]
    ang = 2.0 * np.pi * np.arange(n) / n
    ti, tj = np.meshgrid(ang, ang, indexing="ij")
    verts = r * np.stack(
        [np.cos(ti).ravel(), np.sin(ti).ravel(), np.cos(tj).ravel(), np.sin(tj).ravel()], axis=1
    )
    cells = []
    for i in range(n):
        for j in range(n):
            a = i * n + j
            b = ((i + 1) % n) * n + j
            c = ((i + 1) % n) * n + (j + 1) % n
            e = i * n + (j + 1) % n
            cells.append((a, b, c))
            cells.append((a, c, e))
    cells = np.array(cells, dtype=np.int64)
    # (i + j) mod 3 is a proper colouring only when 3 divides n
    colors = None
    if n % 3 == 0:
        colors = (np.add.outer(np.arange(n), np.arange(n)) % 3).ravel()
    return Triangulation(verts, orient_cells(verts, cells, manifold), manifold, 0, colors)


def seed(manifold, n=3):
    """Seed triangulation of a supported manifold (object or id string)."""
    if isinstance(manifold, str):
        manifold = parse_manifold(manifold)
    if manifold.kind == "sphere":
        return sphere_seed(manifold)
    if manifold.kind == "clifford":
        return clifford_seed(manifold, n)
    if manifold.kind == "s3xs3":
        fa, fb = manifold.factor_manifolds()
        return ProductTriangulation(sphere_seed(fa), sphere_seed(fb), manifold, 0)
    raise UnsupportedManifold(f"no seed for manifold kind {manifold.kind!r}")


# --------------------------------------------------------------------------
# subdivision
# --------------------------------------------------------------------------


def colour_ordered(t, cells):
    """Cells of ``t`` in the vertex order used by subdivision, and the sign of the reordering."""
    return _sorted_with_sign(cells, _order_key(t))


@functools.lru_cache(maxsize=None)
def probe_scheme(d, depth=2):
    """Vertices of ``depth`` edgewise subdivisions of one d-simplex.

    Returns ``(groups, bary)``. Point i < d+1 is vertex i of the cell in
    colour order; every later point is the midpoint of two earlier points,
    listed per level in ``groups`` as rows (new, a, b). ``bary`` holds the
    barycentric coordinates of all points.
    """
    tmpl = edgewise_template(d)
    bary = [tuple(float(i == j) for j in range(d + 1)) for i in range(d + 1)]
    cells = [tuple(range(d + 1))]
    groups = []
    for _ in range(depth):
        made = {}
        rows = []
        nxt = []
        for cell in cells:
            child_cells = []
            for child in tmpl:
                pts, cols = [], []
                for a, b in child:
                    if a == b:
                        pts.append(cell[a])
                    else:
                        key = (min(cell[a], cell[b]), max(cell[a], cell[b]))
                        if key not in made:
                            made[key] = len(bary)
                            bary.append(tuple(0.5 * (x + y) for x, y in zip(bary[key[0]], bary[key[1]])))
                            rows.append((made[key], key[0], key[1]))
                        pts.append(made[key])
                    cols.append((a + b) % (d + 1))
                child_cells.append(tuple(pts[i] for i in np.argsort(cols, kind="stable")))
            nxt.extend(child_cells)
        cells = nxt
        groups.append(np.array(rows, dtype=np.int64).reshape(-1, 3))
    return tuple(groups), np.array(bary)


def subdivide(t, manifold=None):
    """One level of edgewise subdivision with midpoint reprojection."""
    manifold = manifold if manifold is not None else t.manifold
    if isinstance(t, ProductTriangulation):
        fa, fb = _product_factor_manifolds(manifold, t)
        return ProductTriangulation(
            subdivide(t.a, fa), subdivide(t.b, fb), manifold, t.level + 1
        )
    if manifold is None:
        raise ValueError("subdivide needs a manifold for reprojection")
    dist = manifold.distance_to(t.vertices)
    if np.any(dist > 1e-9):
        bad = int(np.argmax(dist))
        raise NotOnManifold(f"vertex {bad} is {dist[bad]:.3g} off the manifold")
    d = t.d
    key = _order_key(t)
    cells, parity = _sorted_with_sign(t.cells, key)
    n = t.n_vertices
    iu, ju = np.triu_indices(d + 1, 1)
    lo = np.minimum(cells[:, iu], cells[:, ju])
    hi = np.maximum(cells[:, iu], cells[:, ju])
    keys = (lo * n + hi).ravel()
    uniq, inverse = np.unique(keys, return_inverse=True)
    mids = 0.5 * (t.vertices[uniq // n] + t.vertices[uniq % n])
    # midpoint projection only needs to stay inside the reach, not the tube
    mdist = manifold.distance_to(mids)
    if np.any(~(mdist < manifold.reach)):
        raise OutsideTube(
            f"edge midpoint at distance {float(mdist.max()):.6g} beyond the reach "
            f"{manifold.reach:.6g}; the mesh is too coarse to subdivide"
        )
    new_vertices = np.concatenate([t.vertices, manifold.normal_projection(mids, check=False)])
    edge_index = (n + inverse).reshape(cells.shape[0], -1)
    pair_slot = -np.ones((d + 1, d + 1), dtype=np.int64)
    pair_slot[iu, ju] = np.arange(len(iu))
    pair_slot[ju, iu] = np.arange(len(iu))
    tmpl = edgewise_template(d)
    children = np.empty((cells.shape[0], tmpl.shape[0], d + 1), dtype=np.int64)
    for ci in range(tmpl.shape[0]):
        for vj in range(d + 1):
            a, b = tmpl[ci, vj]
            if a == b:
                children[:, ci, vj] = cells[:, a]
            else:
                children[:, ci, vj] = edge_index[:, pair_slot[a, b]]
    neg = parity < 0
    children[neg] = children[neg][:, :, list(flip_permutation(d))]
    colors = None
    if key is not None:
        u, v = uniq // n, uniq % n
        colors = np.concatenate([2 * key, key[u] + key[v]]) % (d + 1)
    return Triangulation(new_vertices, children.reshape(-1, d + 1), manifold, t.level + 1, colors)


def _product_factor_manifolds(manifold, t):
    if t.a.manifold is not None and t.b.manifold is not None:
        return t.a.manifold, t.b.manifold
    fac = manifold.factor_manifolds()
    return fac[0], fac[1]


def refine(manifold, level, n=3):
    """Seed of ``manifold`` subdivided ``level`` times."""
    if isinstance(manifold, str):
        manifold = parse_manifold(manifold)
    t = seed(manifold, n)
    for _ in range(level):
        t = subdivide(t, manifold)
    return t


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


@dataclass
class ValidationReport:
    valid: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.valid

    @property
    def first(self):
        return self.violations[0] if self.violations else None


def _parity(rows):
    """Parity (0/1) of the permutation sorting each row."""
    k = rows.shape[1]
    inv = np.zeros(rows.shape[0], dtype=np.int64)
    for i in range(k):
        for j in range(i + 1, k):
            inv += rows[:, i] > rows[:, j]
    return inv % 2


def facets(cells):
    """Facets of each cell: (c, d+1, d) index rows and induced signs (c, d+1)."""
    d = cells.shape[1] - 1
    idx = np.array([[j for j in range(d + 1) if j != i] for i in range(d + 1)])
    fac = cells[:, idx]
    sign = np.where(np.arange(d + 1) % 2 == 0, 1, -1)
    return fac, np.broadcast_to(sign, (cells.shape[0], d + 1))


def validate(t, closed=True) -> ValidationReport:
    """Check distinct indices, coherent orientation and dual connectivity."""
    cells = t.cells
    report = ValidationReport(True)
    if cells.size == 0:
        report.valid = False
        report.violations.append("complex has no cells")
        return report
    srt = np.sort(cells, axis=1)
    rep = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
    for c in rep[:10]:
        report.violations.append(f"cell {int(c)} repeats a vertex index: {cells[c].tolist()}")
    if np.any((cells < 0) | (cells >= t.n_vertices)):
        bad = int(np.flatnonzero(np.any((cells < 0) | (cells >= t.n_vertices), axis=1))[0])
        report.violations.append(f"cell {bad} references a missing vertex")
    if report.violations:
        report.valid = False
        return report
    d = t.d
    fac, sign = facets(cells)
    fac = fac.reshape(-1, d)
    orient = sign.reshape(-1) * np.where(_parity(fac) == 1, -1, 1)
    owner = np.repeat(np.arange(cells.shape[0]), d + 1)
    keys = np.sort(fac, axis=1)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if closed:
        bad = np.flatnonzero(counts != 2)
        for f in bad[:10]:
            owners = owner[inverse == f]
            report.violations.append(
                f"face {uniq[f].tolist()} is shared by {int(counts[f])} cells "
                f"{owners.tolist()} (expected 2)"
            )
    total = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(total, inverse, orient)
    pair = counts == 2
    incoherent = np.flatnonzero(pair & (total != 0))
    for f in incoherent[:10]:
        owners = owner[inverse == f]
        report.violations.append(
            f"incoherent orientation across face {uniq[f].tolist()} "
            f"between cells {owners.tolist()}"
        )
    # dual graph over faces shared by exactly two cells
    order = np.argsort(inverse, kind="stable")
    inv_sorted = inverse[order]
    own_sorted = owner[order]
    starts = np.searchsorted(inv_sorted, np.flatnonzero(pair))
    a, b = own_sorted[starts], own_sorted[starts + 1]
    n = cells.shape[0]
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != 1:
        report.violations.append(f"dual graph has {ncomp} connected components")
    report.valid = not report.violations
    return report


def _count_distinct_rows(rows, n):
    # pack vertex indices into as few int64 words as fit, then sort
    bits = max(1, int(n - 1).bit_length())
    per_word = max(1, 62 // bits)
    words = []
    for s in range(0, rows.shape[1], per_word):
        w = np.zeros(rows.shape[0], dtype=np.int64)
        for j in range(s, min(s + per_word, rows.shape[1])):
            w = (w << bits) | rows[:, j]
        words.append(w)
    if len(words) == 1:
        return len(np.unique(words[0]))
    order = np.lexsort(words[::-1])
    stacked = np.stack([w[order] for w in words], axis=1)
    return 1 + int(np.count_nonzero(np.any(stacked[1:] != stacked[:-1], axis=1)))


def euler_characteristic(t):
    cells = np.sort(t.cells, axis=1)
    d = t.d
    chi = 0
    for k in range(d + 1):
        combos = np.array(list(itertools.combinations(range(d + 1), k + 1)))
        faces = cells[:, combos].reshape(-1, k + 1)
        chi += (-1) ** k * _count_distinct_rows(faces, t.n_vertices)
    return int(chi)


# --------------------------------------------------------------------------
# quality audit
# --------------------------------------------------------------------------


@dataclass
class QualityAudit:
    n_cells: int
    mesh_size: float
    min_ambient_fullness: float
    max_ambient_fullness: float
    histogram: list
    min_internal_fullness: float | None = None
    max_internal_fullness: float | None = None
    internal_histogram: list | None = None

    def to_dict(self):
        # internal fields are absent when no manifold was given
        return {k: v for k, v in self.__dict__.items() if v is not None}


def audit(t, manifold=None, chunk=DEFAULT_CHUNK) -> QualityAudit:
    """Mesh size and fullness statistics; internal fullness needs a manifold."""
    diam_max = 0.0
    amb, internal = [], []
    for _, cells in t.iter_cells(chunk):
        pts = t.vertices[cells]
        diam_max = max(diam_max, float(kernels.vertex_diameters(pts).max()))
        amb.append(kernels.fullness(pts))
        if manifold is not None:
            gd = cell_geodesic_diameters(manifold, pts)
            if np.any(gd >= manifold.injectivity_radius):
                raise InjectivityRadiusExceeded(
                    f"a cell has geodesic diameter {gd.max():.6g} >= injectivity radius "
                    f"{manifold.injectivity_radius:.6g}"
                )
            internal.append(internal_fullness_batch(manifold, pts, check=False))
    amb = np.concatenate(amb)
    deciles = np.linspace(0.0, 1.0, 11)
    out = QualityAudit(
        n_cells=int(t.n_cells),
        mesh_size=diam_max,
        min_ambient_fullness=float(amb.min()),
        max_ambient_fullness=float(amb.max()),
        histogram=[float(v) for v in np.quantile(amb, deciles)],
    )
    if manifold is not None:
        internal = np.concatenate(internal)
        out.min_internal_fullness = float(internal.min())
        out.max_internal_fullness = float(internal.max())
        out.internal_histogram = [float(v) for v in np.quantile(internal, deciles)]
    return out


def signed_ambient_fullness(t, manifold):
    """Per-cell ambient fullness signed through the tangent frame at vertex 0."""
    return ambient_fullness_batch(manifold, t.vertices[t.cells])


def regular_fullness(d):
    """Fullness of the regular d-simplex."""
    return math.sqrt(d + 1) / (math.factorial(d) * 2 ** (d / 2))


# --------------------------------------------------------------------------
# OFF I/O
# --------------------------------------------------------------------------


def dumps_off(t) -> str:
    lines = ["OFF", f"# d={t.d} m={t.m}"]
    if t.manifold is not None:
        lines.append(f"# manifold={t.manifold.id} level={t.level}")
    cells = t.cells
    lines.append(f"{t.n_vertices} {len(cells)} 0")
    lines.extend(" ".join(repr(float(x)) for x in v) for v in t.vertices)
    k = t.d + 1
    lines.extend(f"{k} " + " ".join(str(int(i)) for i in c) for c in cells)
    return "\n".join(lines) + "\n"


def save_off(t, path):
    with open(path, "w") as fh:
        fh.write(dumps_off(t))


def loads_off(text, manifold=None) -> Triangulation:
    meta = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s:
            continue
        if s.startswith("#"):
            for tok in s[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    meta[key.strip()] = val.strip()
            continue
        rows.append((lineno, s.split()))
    if not rows or rows[0][1] != ["OFF"]:
        raise ParseError("expected OFF header", rows[0][0] if rows else 1)
    if len(rows) < 2:
        raise ParseError("missing counts line", rows[0][0] + 1)
    lineno, counts = rows[1]
    try:
        nv, nc = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise ParseError("counts line must be '<nv> <nc> 0'", lineno) from None
    body = rows[2:]
    last = rows[-1][0]
    if len(body) < nv + nc:
        raise ParseError(
            f"file truncated: expected {nv} vertices and {nc} cells, found {len(body)} lines",
            last + 1,
        )
    verts = []
    for lineno, tok in body[:nv]:
        try:
            verts.append([float(x) for x in tok])
        except ValueError:
            raise ParseError("vertex coordinates must be decimals", lineno) from None
    widths = {len(v) for v in verts}
    if len(widths) > 1:
        raise ParseError("vertices differ in dimension", body[0][0])
    d = int(meta["d"]) if "d" in meta else None
    cells = []
    for lineno, tok in body[nv:nv + nc]:
        try:
            vals = [int(x) for x in tok]
        except ValueError:
            raise ParseError("cell indices must be integers", lineno) from None
        k = vals[0]
        if len(vals) - 1 != k:
            raise ParseError(f"cell declares {k} indices but lists {len(vals) - 1}", lineno)
        if d is None:
            d = k - 1
        if k - 1 != d:
            raise DimensionUnsupported(
                f"line {lineno}: cell with {k} indices does not match d={d}"
            )
        if any(i < 0 or i >= nv for i in vals[1:]):
            raise ParseError("cell index out of range", lineno)
        cells.append(vals[1:])
    if len(body) > nv + nc:
        raise ParseError("unexpected trailing data", body[nv + nc][0])
    if manifold is None and "manifold" in meta:
        manifold = parse_manifold(meta["manifold"])
    elif isinstance(manifold, str):
        manifold = parse_manifold(manifold)
    level = int(meta.get("level", 0))
    verts = np.array(verts, dtype=float).reshape(nv, -1)
    cells = np.array(cells, dtype=np.int64).reshape(nc, (d or 0) + 1)
    return Triangulation(verts, cells, manifold, level)


def load_off(path, manifold=None) -> Triangulation:
    with open(path) as fh:
        return loads_off(fh.read(), manifold)
