"""End-to-end acceptance checks, one test per criterion.

Each test reports through the ``criterion`` fixture; the terminal summary
prints one PASS/FAIL line per criterion.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from qcpl.experiments import EXPERIMENTS, run_experiment
from qcpl.manifolds import clifford_torus, exp_bilipschitz_constant, parse_manifold, sphere
from qcpl.qcmaps import (
    Composition,
    estimate_global_dilatation,
    parse_map,
    random_rotation_map,
    random_sphere_moebius,
)
from qcpl.secant import certify, report, secant_approximate
from qcpl.simplex import Simplex, fullness_signed
from qcpl.triangulation import audit, euler_characteristic, refine

FLOORS = json.loads((Path(__file__).parent / "fixtures" / "fullness_floors.json").read_text())
S2 = sphere(2)


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("QCPL_SEED", raising=False)


def _k(f, seed=0):
    return estimate_global_dilatation(f, n_points=200, seed=seed).pointwise_max


def test_criterion_01_conformal_maps(criterion):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    moeb = [_k(random_sphere_moebius(S2, rng), i) for i in range(10)]
    rots = [_k(random_rotation_map(S2, rng), i) for i in range(10)]
    elapsed = time.perf_counter() - t0
    vals = moeb + rots
    criterion(all(1.0 <= v <= 1.01 for v in vals), f"range [{min(vals):.6f}, {max(vals):.6f}]")
    criterion(elapsed < 30.0, f"{elapsed:.1f} s")


def test_criterion_02_radial_stretch(criterion):
    for s in (1.2, 1.5, 2.0):
        est = _k(parse_map(f"stretch:s={s}", S2))
        criterion(abs(est - s) <= 0.1 * s, f"s={s}: {est:.4f}")


def _catalog(rng, i):
    kind = i % 3
    if kind == 0:
        return random_sphere_moebius(S2, rng)
    if kind == 1:
        return random_rotation_map(S2, rng)
    pole = ";".join(repr(float(v)) for v in rng.standard_normal(3))
    s = float(rng.choice([1.2, 1.5]))
    return parse_map(f"stretch:s={s},pole={pole}", S2)


def test_criterion_03_submultiplicative(criterion):
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(20):
        a, b = _catalog(rng, i), _catalog(rng, i + 1 + i // 3)
        ka, kb, kab = _k(a, i), _k(b, i), _k(Composition([a, b]), i)
        worst = max(worst, kab / (ka * kb))
    criterion(worst <= 1.05, f"max estimate(a.b)/(estimate(a) estimate(b)) = {worst:.4f}")


def test_criterion_04_exp_bilipschitz(criterion):
    x = np.array([0.0, 0.0, 1.0])
    errs = [abs(exp_bilipschitz_constant(S2, x, d) - d / math.sin(d)) for d in (0.1, 0.3, 0.6)]
    criterion(max(errs) < 1e-3, f"sphere max error {max(errs):.2e}")
    tor = clifford_torus()
    p = tor.random_points(1, np.random.default_rng(0))[0]
    errs = [abs(exp_bilipschitz_constant(tor, p, d) - 1.0) for d in (0.1, 0.3, 0.6)]
    criterion(max(errs) < 1e-6, f"torus max error {max(errs):.2e}")


def test_criterion_05_fullness_regression(criterion):
    tet = Simplex([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]])
    tri = Simplex([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    ft, fr = fullness_signed(tet), fullness_signed(tri)
    criterion(abs(abs(ft) - 1 / (6 * math.sqrt(2))) < 1e-12, f"tetrahedron {ft!r}")
    criterion(abs(fr - math.sqrt(3) / 4) < 1e-12, f"triangle {fr!r}")
    swapped_tet = Simplex(tet.vertices[[1, 0, 2, 3]])
    swapped_tri = Simplex(tri.vertices[[0, 2, 1]])
    criterion(fullness_signed(swapped_tet) == -ft and fullness_signed(swapped_tri) == -fr,
              "transposition flips sign exactly")


# s3xs3 stops at level 1: level 2 has 2.1e7 cells and levels 3..4 are out of reach
QUALITY_RUNS = [
    ("sphere:d=1,r=1", range(1, 5), 0),
    ("sphere:d=2,r=1", range(1, 5), 2),
    ("clifford", range(1, 5), 0),
    ("sphere:d=3,r=1", range(1, 5), 0),
    ("sphere:d=4,r=1", range(1, 5), 2),
    ("s3xs3", range(1, 2), 0),
]


def test_criterion_06_subdivision_quality(criterion):
    for mid, levels, chi in QUALITY_RUNS:
        man = parse_manifold(mid)
        floor = FLOORS[man.id]["theta_star"]
        mins, chis = [], set()
        for level in levels:
            t = refine(man, level)
            if hasattr(t, "materialize"):
                t = t.materialize()
            mins.append(audit(t, man).min_internal_fullness)
            chis.add(euler_characteristic(t))
        criterion(min(mins) >= floor and chis == {chi},
                  f"{man.id} L{levels[0]}..{levels[-1]} min {min(mins):.4g} >= {floor:.4g} chi={sorted(chis)}")


def test_criterion_07_pipeline_on_s2(criterion):
    t0 = time.perf_counter()
    for expr in ("id", "rot:axis=z,angle=0.7", "stretch:s=1.2"):
        f = parse_map(expr, S2)
        c0, ok = [], True
        for level in range(2, 6):
            pl = secant_approximate(f, refine(S2, level))
            cert = certify(pl)
            ok = ok and cert.is_pl_homeomorphism and cert.degree == 1 and cert.n_negative == 0
            c0.append(report(f, pl, n_random=200).c0_error)
        ratios = [a / b for a, b in zip(c0, c0[1:])]
        criterion(ok and min(ratios) >= 1.5, f"{expr} certified={ok} min c0 ratio {min(ratios):.2f}")
    elapsed = time.perf_counter() - t0
    criterion(elapsed < 120.0, f"{elapsed:.1f} s")


@pytest.mark.slow
def test_criterion_08_flagship_product(criterion):
    man = parse_manifold("s3xs3")
    t0 = time.perf_counter()
    pl = secant_approximate(parse_map("stretch:s=1.2", man), refine(man, 2))
    cert = certify(pl)
    elapsed = time.perf_counter() - t0
    criterion(cert.is_pl_homeomorphism and cert.degree == 1,
              f"L2 {pl.source.n_cells} cells degree={cert.degree} negative={cert.n_negative}")
    criterion(elapsed < 600.0, f"{elapsed:.1f} s")


def test_criterion_09_reflection_degree(criterion):
    f = parse_map("compose(reflect:axis=x,stretch:s=1.2)", S2)
    cert = certify(secant_approximate(f, refine(S2, 2)))
    criterion(cert.degree == -1, f"degree={cert.degree}")
    criterion(not cert.is_pl_homeomorphism and len(cert.failures) >= 1 and cert.n_negative >= 1,
              f"{len(cert.failures)} failing cells, {cert.n_negative} negative")


def test_criterion_10_commensurability(criterion):
    res = run_experiment("commensurability", {"levels": "1..4"})
    dev, mesh = res.column("max_deviation"), res.column("mesh_size")
    halvings = [b / a for a, b in zip(mesh, mesh[1:])]
    criterion(all(0.4 < h < 0.6 for h in halvings), "mesh ratios " + ", ".join(f"{h:.3f}" for h in halvings))
    criterion(all(b < a for a, b in zip(dev, dev[1:])), "deviation " + ", ".join(f"{v:.4g}" for v in dev))


def test_criterion_11_determinism(criterion, tmp_path):
    for exp_id in EXPERIMENTS:
        run_experiment(exp_id, {"seed": "5"}, tmp_path / "a")
        run_experiment(exp_id, {"seed": "5"}, tmp_path / "b")
        same = (tmp_path / "a" / f"{exp_id}.csv").read_bytes() == (tmp_path / "b" / f"{exp_id}.csv").read_bytes()
        criterion(same, f"{exp_id} identical")
