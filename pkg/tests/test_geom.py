import math

import numpy as np
import pytest

from qcpl.errors import DimensionMismatch, FullyDegenerate, ParseError
from qcpl.geom import (
    INFINITY,
    Configuration,
    MoebiusTransform,
    Rotation,
    Scaling,
    Similarity,
    SphereInversion,
    Translation,
    dumps_configuration,
    is_infinity,
    loads_configuration,
    moebius_apply,
    moebius_compose,
    poincare_extension,
    random_rotation,
    random_similarity,
    shape_distance,
    shape_of,
)


def test_configuration_rejects_nonfinite():
    with pytest.raises(ValueError):
        Configuration([[0.0, np.nan]])


def test_fully_degenerate_flag():
    assert Configuration([[1.0, 2.0], [1.0, 2.0]]).fully_degenerate
    assert not Configuration([[1.0, 2.0], [1.0, 2.5]]).fully_degenerate


def test_similarity_requires_proper_rotation():
    with pytest.raises(ValueError):
        Similarity(1.0, np.diag([1.0, -1.0]), [0.0, 0.0])
    with pytest.raises(ValueError):
        Similarity(0.0, np.eye(2), [0.0, 0.0])


def test_canonical_two_points():
    sh = shape_of(Configuration([[0.0, 0.0], [1.0, 0.0]]))
    want = np.array([[-1 / math.sqrt(2), 0.0], [1 / math.sqrt(2), 0.0]])
    assert np.allclose(sh.canonical.points, want, atol=1e-12)


def test_canonical_is_centered_and_unit():
    rng = np.random.default_rng(3)
    sh = shape_of(Configuration(rng.normal(size=(7, 3))))
    assert np.abs(sh.canonical.points.mean(axis=0)).max() < 1e-12
    assert abs(np.linalg.norm(sh.canonical.points) - 1.0) < 1e-12


def test_shape_ignores_scale_and_shift():
    pts = np.array([[0.0, 0.0], [2.0, 0.5], [0.3, 1.7]])
    a = shape_of(Configuration(pts))
    b = shape_of(Configuration(5 * pts + 3))
    assert np.allclose(a.canonical.points, b.canonical.points, atol=1e-12)


def test_shape_of_degenerate():
    with pytest.raises(FullyDegenerate):
        shape_of(Configuration([[1.0, 1.0]] * 3))


def test_shape_distance_rotation_and_mirror():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.2, 0.7]])
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    a = shape_of(Configuration(tri))
    assert shape_distance(a, a) == 0.0
    assert shape_distance(a, shape_of(Configuration(tri @ rot.T))) < 1e-9
    mirror = shape_of(Configuration(tri * [1.0, -1.0]))
    d = shape_distance(a, mirror)
    # grid search over rotation angles agrees with the closed form
    angles = np.linspace(0, 2 * np.pi, 20001)
    best = min(
        np.linalg.norm(a.canonical.points @ np.array([[c, -s], [s, c]]).T - mirror.canonical.points)
        for c, s in zip(np.cos(angles), np.sin(angles))
    )
    assert d > 0.1
    assert abs(d - best) < 1e-6


def test_shape_distance_size_mismatch():
    a = shape_of(Configuration([[0.0, 0.0], [1.0, 0.0]]))
    b = shape_of(Configuration([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    with pytest.raises(DimensionMismatch):
        shape_distance(a, b)


def test_unit_inversion():
    mu = MoebiusTransform(2, (SphereInversion([0.0, 0.0], 1.0),))
    assert np.allclose(moebius_apply(mu, [2.0, 0.0]), [0.5, 0.0])
    assert is_infinity(moebius_apply(mu, [0.0, 0.0]))
    assert np.allclose(moebius_apply(mu, INFINITY), [0.0, 0.0])


def test_identity_word():
    x = np.array([0.3, -2.0, 1.0])
    assert np.array_equal(moebius_apply(MoebiusTransform.identity(3), x), x)


def test_inversion_is_involution():
    inv = MoebiusTransform(3, (SphereInversion([0.5, -1.0, 0.2], 1.7),))
    pts = np.random.default_rng(0).normal(size=(100, 3))
    out = moebius_compose(inv, inv).apply_array(pts)
    assert np.abs(out - pts).max() < 1e-9


def test_group_laws():
    pts = np.random.default_rng(1).normal(size=(50, 2))
    t = MoebiusTransform(2, (Translation([1.0, 2.0]),))
    s = MoebiusTransform(2, (Translation([-0.5, 0.25]),))
    assert np.allclose(moebius_compose(t, s).apply_array(pts), pts + [0.5, 2.25])
    a = MoebiusTransform(2, (Scaling(2.0, 2),))
    b = MoebiusTransform(2, (Scaling(3.0, 2),))
    assert np.allclose(moebius_compose(a, b).apply_array(pts), 6 * pts)


def test_compose_order():
    t = MoebiusTransform(1, (Translation([1.0]),))
    s = MoebiusTransform(1, (Scaling(2.0, 1),))
    # a(b(x)) with a = translate, b = scale
    assert np.allclose(moebius_apply(moebius_compose(t, s), [3.0]), [7.0])


def test_word_evaluation_is_associative():
    rng = np.random.default_rng(2)
    word = (
        SphereInversion([1.0, 0.0, 0.0], 0.8),
        Rotation(random_rotation(3, rng)),
        Translation([0.1, 0.2, -0.3]),
        SphereInversion([0.0, 2.0, 0.0], 1.3),
        Scaling(0.7, 3),
    )
    pts = rng.normal(size=(40, 3))
    whole = MoebiusTransform(3, word).apply_array(pts)
    first = MoebiusTransform(3, word[:2]).apply_array(pts)
    rest = MoebiusTransform(3, word[2:]).apply_array(first)
    assert np.abs(whole - rest).max() < 1e-9


def test_singular_set():
    mu = MoebiusTransform(2, (Translation([1.0, 0.0]), SphereInversion([3.0, 1.0], 2.0)))
    (p,) = mu.singular_set()
    assert np.allclose(p, [2.0, 1.0])
    assert MoebiusTransform(2, (Translation([1.0, 0.0]),)).singular_set() == []


def test_apply_array_marks_infinity():
    mu = MoebiusTransform(2, (SphereInversion([0.0, 0.0], 1.0),))
    out = mu.apply_array([[0.0, 0.0], [2.0, 0.0]])
    assert np.all(np.isinf(out[0]))
    assert np.allclose(out[1], [0.5, 0.0])


def test_orientation_of_words():
    inv = SphereInversion([0.0, 0.0], 1.0)
    assert not MoebiusTransform(2, (inv,)).orientation_preserving
    assert MoebiusTransform(2, (inv, inv)).orientation_preserving


def test_poincare_extension_fixes_upper_axis():
    mu = MoebiusTransform(2, (SphereInversion([0.3, 0.1], 1.2), Translation([1.0, -1.0])))
    ext = poincare_extension(mu)
    x = np.array([0.7, -0.4])
    assert np.allclose(moebius_apply(ext, np.append(x, 0.0)), np.append(moebius_apply(mu, x), 0.0))


def test_similarity_preserves_shape():
    rng = np.random.default_rng(4)
    cfg = Configuration(rng.normal(size=(5, 3)))
    sim = random_similarity(3, rng)
    assert shape_distance(shape_of(cfg), shape_of(sim(cfg))) < 1e-9


def test_configuration_csv_round_trip():
    cfg = Configuration(np.random.default_rng(5).normal(size=(4, 3)))
    back = loads_configuration(dumps_configuration(cfg))
    assert np.array_equal(back.points, cfg.points)


def test_configuration_csv_errors():
    with pytest.raises(ParseError):
        loads_configuration("1,2\n")
    with pytest.raises(ParseError) as exc:
        loads_configuration("# d=2 r=2\n1,2\n1,x\n")
    assert exc.value.line == 3
