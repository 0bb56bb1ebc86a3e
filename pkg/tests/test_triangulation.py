import math

import numpy as np
import pytest

from qcpl.errors import DimensionUnsupported, InjectivityRadiusExceeded, NotOnManifold, ParseError
from qcpl.manifolds import parse_manifold, sphere
from qcpl.triangulation import (
    ProductTriangulation,
    Triangulation,
    audit,
    dumps_off,
    edgewise_template,
    euler_characteristic,
    flip_permutation,
    load_off,
    loads_off,
    probe_scheme,
    refine,
    regular_fullness,
    save_off,
    seed,
    subdivide,
    validate,
    vertex_coloring,
    _parity,
)

S2 = "sphere:d=2,r=1"
S3 = "sphere:d=3,r=1"


def tetra_boundary():
    verts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / math.sqrt(3)
    cells = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])
    return Triangulation(verts, cells)


@pytest.mark.parametrize("d", range(1, 7))
def test_flip_permutation_is_odd(d):
    assert _parity(np.array([flip_permutation(d)]))[0] == 1


@pytest.mark.parametrize("d", range(1, 6))
def test_template_children(d):
    tmpl = edgewise_template(d)
    assert tmpl.shape == (2**d, d + 1, 2)
    # children tile the simplex: volumes add up to the parent volume
    corners = np.vstack([np.zeros(d), np.eye(d)])
    pts = 0.5 * (corners[tmpl[:, :, 0]] + corners[tmpl[:, :, 1]])
    dets = np.linalg.det(pts[:, 1:] - pts[:, :1])
    assert np.all(dets > 0)
    assert dets.sum() == pytest.approx(1.0)


def test_seed_counts():
    for mid, nv, nc in [(S2, 6, 8), ("clifford", 9, 18), (S3, 8, 16), ("sphere:d=1,r=1", 4, 4)]:
        t = seed(mid)
        assert (t.n_vertices, t.n_cells) == (nv, nc)
    p = seed("s3xs3")
    assert (p.n_vertices, p.n_cells, p.d) == (64, 16 * 16 * 20, 6)


def test_first_subdivision_counts():
    t = subdivide(seed(S2))
    assert (t.n_vertices, t.n_cells) == (18, 32)


def test_validate_examples():
    t = tetra_boundary()
    assert validate(t).valid
    bad = Triangulation(t.vertices, t.cells.copy())
    bad.cells[0] = bad.cells[0][[1, 0, 2]]
    rep = validate(bad)
    assert not rep.valid
    assert any("incoherent orientation" in v for v in rep.violations)
    rep = validate(Triangulation(t.vertices, np.array([[0, 0, 1], [0, 2, 1], [0, 1, 3], [1, 2, 3]])))
    assert not rep and "repeats a vertex" in rep.first


def test_validate_open_complex():
    t = tetra_boundary()
    half = Triangulation(t.vertices, t.cells[:3])
    assert not validate(half).valid
    assert "shared by 1 cells" in validate(half).first


@pytest.mark.parametrize(
    "mid,levels,chi",
    [("sphere:d=1,r=1", 5, 0), (S2, 5, 2), ("clifford", 5, 0), (S3, 4, 0), ("sphere:d=4,r=1", 2, 2)],
)
def test_levels_valid_with_fixed_euler_characteristic(mid, levels, chi):
    man = parse_manifold(mid)
    t = seed(man)
    for level in range(levels + 1):
        assert validate(t).valid, (mid, level)
        assert euler_characteristic(t) == chi
        assert np.abs(man.distance_to(t.vertices)).max() < 1e-12
        t = subdivide(t, man)


def test_product_seed_and_level_one():
    for level in (0, 1):
        t = refine("s3xs3", level).materialize()
        assert validate(t).valid
        if level == 0:
            assert euler_characteristic(t) == 0


def test_product_random_access_matches_blocks():
    p = refine("s3xs3", 0)
    idx = np.array([0, 5, 1234, p.n_cells - 1])
    assert np.array_equal(p.cells_at(idx), p.cells[idx])
    starts = [s for s, _ in p.iter_cells(chunk=1000)]
    assert starts[0] == 0 and sum(len(c) for _, c in p.iter_cells(chunk=1000)) == p.n_cells


@pytest.mark.parametrize("mid,first", [(S2, 0), ("clifford", 0), (S3, 1), ("sphere:d=4,r=1", 1)])
def test_mesh_size_decreases(mid, first):
    sizes = [audit(refine(mid, level)).mesh_size for level in range(4 if mid != "sphere:d=4,r=1" else 3)]
    # the cross-polytope diagonal survives the first step in d >= 3
    assert all(b < a for a, b in zip(sizes[first:], sizes[first + 1:]))
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))


def test_mesh_contraction_on_s2():
    sizes = [audit(refine(S2, level)).mesh_size for level in range(4)]
    assert sizes[3] <= sizes[0] * 0.6**3


def test_fullness_floor_after_two_subdivisions():
    man = parse_manifold(S2)
    level1 = audit(refine(man, 1), man).min_ambient_fullness
    level3 = audit(refine(man, 3), man).min_ambient_fullness
    assert level3 >= level1 / 2


def test_colour_order_keeps_s3_shapes():
    man = parse_manifold(S3)
    vals = [audit(refine(man, level), man).min_internal_fullness for level in (2, 3, 4)]
    assert max(vals) - min(vals) < 1e-9


def test_octahedron_audit():
    man = parse_manifold(S2)
    a = audit(seed(man), man)
    assert a.min_ambient_fullness == pytest.approx(a.max_ambient_fullness, abs=1e-15)
    assert a.min_ambient_fullness == pytest.approx(regular_fullness(2))
    assert a.mesh_size == pytest.approx(math.sqrt(2))
    bare = audit(seed(man))
    assert bare.min_internal_fullness is None and "min_internal_fullness" not in bare.to_dict()


def test_audit_injectivity_guard():
    verts = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    with pytest.raises(InjectivityRadiusExceeded):
        audit(Triangulation(verts, [[0, 1, 2]]), sphere(2))


def test_subdivide_needs_vertices_on_manifold():
    t = seed(S2)
    moved = Triangulation(t.vertices * 1.01, t.cells)
    with pytest.raises(NotOnManifold):
        subdivide(moved, sphere(2))


def test_colouring_is_recovered():
    t = refine(S3, 2)
    col = vertex_coloring(t.cells, t.n_vertices)
    assert col is not None
    # the colouring is unique up to a permutation of the colours
    perm = dict(zip(col[t.cells[0]], t.colors[t.cells[0]]))
    assert np.array_equal(np.array([perm[c] for c in col]), t.colors)
    odd = seed("clifford", 4)
    assert odd.colors is None and vertex_coloring(odd.cells, odd.n_vertices) is None


def test_uncolourable_mesh_still_subdivides():
    man = parse_manifold("clifford")
    t = seed(man, 4)
    for _ in range(2):
        t = subdivide(t, man)
        assert validate(t).valid
    assert euler_characteristic(t) == 0


def test_off_round_trip(tmp_path):
    t = refine(S2, 1)
    path = tmp_path / "m.off"
    save_off(t, path)
    back = load_off(path, sphere(2))
    assert np.array_equal(back.cells, t.cells)
    assert np.abs(back.vertices - t.vertices).max() <= 1e-12
    assert back.level == 1
    text = path.read_text()
    assert text.startswith("OFF\n")


def test_off_subdivision_recovers_colouring():
    man = parse_manifold(S3)
    loaded = loads_off(dumps_off(seed(man)), man)
    assert loaded.colors is None
    a = subdivide(subdivide(loaded, man), man)
    assert loaded.colors is not None
    assert validate(a).valid and euler_characteristic(a) == 0
    # a relabelled colouring cuts other diagonals but keeps the floor
    floor = audit(refine(man, 2), man).min_internal_fullness
    assert audit(a, man).min_internal_fullness >= floor / 2


def test_off_errors():
    text = dumps_off(seed(S2))
    with pytest.raises(ParseError) as exc:
        loads_off("\n".join(text.splitlines()[:7]))
    assert exc.value.line is not None
    bad = "OFF\n# d=2 m=3\n3 1 0\n1 0 0\n0 1 0\n0 0 1\n5 0 1 2 0 1\n"
    with pytest.raises(DimensionUnsupported):
        loads_off(bad)
    with pytest.raises(ParseError):
        loads_off("OFF\n3 1 0\n1 0 x\n0 1 0\n0 0 1\n3 0 1 2\n")


@pytest.mark.parametrize("d", [1, 2, 3, 6])
def test_probe_scheme_counts(d):
    groups, bary = probe_scheme(d)
    assert len(bary) == math.comb(d + 4, d)
    assert np.allclose(bary.sum(axis=1), 1.0)
    assert len(np.unique(np.round(bary * 4).astype(int), axis=0)) == len(bary)
