import math

import numpy as np
import pytest

from qcpl.errors import CertificationFailed, ConfigError, NumericalGuard
from qcpl.experiments import (
    ExperimentConfig,
    ProbeResult,
    analytic_exp_constant,
    batch_shape_distance,
    parse_config,
    parse_levels,
    run_experiment,
    sample_full_simplices,
    signed_fullness_flat,
)
from qcpl.manifolds import parse_manifold

SMALL = {
    "shape_vs_radius": {"radii": "2,5,21", "n_maps": "4", "n_simplices": "40"},
    "fullness_vs_k": {"ks": "1.0,1.2", "deltas": "0.2,0.05,0.0125", "n_simplices": "60"},
    "secant_convergence": {"levels": "0..2", "n_random": "50"},
    "commensurability": {"levels": "1..2"},
    "exp_bilipschitz": {"deltas": "0.1,0.3"},
}


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("QCPL_SEED", raising=False)


def test_parse_config_comments_and_blanks():
    cfg = parse_config("# header\n\nmanifold = sphere:d=2,r=1  # trailing\nlevels=1..3\n")
    assert cfg == {"manifold": "sphere:d=2,r=1", "levels": "1..3"}


@pytest.mark.parametrize("text", ["no equals sign", "=value"])
def test_parse_config_rejects_malformed(text):
    with pytest.raises(ConfigError, match="line 1"):
        parse_config(text)


def test_parse_levels():
    assert parse_levels("2..5") == [2, 3, 4, 5]
    assert parse_levels("0,2") == [0, 2]
    for bad in ("a..b", "", "-1", "3..1"):
        with pytest.raises(ConfigError):
            parse_levels(bad)


def test_unknown_experiment():
    with pytest.raises(ConfigError, match="unknown experiment"):
        ExperimentConfig.from_dict("nope", {})


def test_seed_from_env(monkeypatch):
    assert ExperimentConfig.from_dict("commensurability", {"seed": "4"}).seed == 4
    monkeypatch.setenv("QCPL_SEED", "11")
    assert ExperimentConfig.from_dict("commensurability", {"seed": "4"}).seed == 11
    monkeypatch.setenv("QCPL_SEED", "x")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict("commensurability", {})


@pytest.mark.parametrize("exp_id", sorted(SMALL))
def test_rerun_is_byte_identical(exp_id, tmp_path):
    a = run_experiment(exp_id, SMALL[exp_id], tmp_path / "a")
    b = run_experiment(exp_id, SMALL[exp_id], tmp_path / "b")
    ta = (tmp_path / "a" / f"{exp_id}.csv").read_bytes()
    assert ta == (tmp_path / "b" / f"{exp_id}.csv").read_bytes()
    assert a.to_csv() == b.to_csv()
    assert ta.startswith(f"# experiment={exp_id}\n".encode())


def test_seed_changes_random_output():
    p = dict(SMALL["shape_vs_radius"])
    a = run_experiment("shape_vs_radius", p).to_csv()
    b = run_experiment("shape_vs_radius", {**p, "seed": "1"}).to_csv()
    assert a != b


def test_sampled_simplices_meet_floor():
    rng = np.random.default_rng(0)
    s = sample_full_simplices(rng, 50, 3, 0.02)
    full = signed_fullness_flat(s)
    assert s.shape == (50, 4, 3)
    assert np.all(full >= 0.02)
    assert np.all(np.linalg.norm(s, axis=2) <= 1.0 + 1e-12)


def test_shape_distance_is_similarity_invariant():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((10, 4, 3))
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    b = 2.5 * a @ q.T + rng.standard_normal(3)
    assert np.all(batch_shape_distance(a, b) < 1e-12)


def test_shape_vs_radius_trend():
    res = run_experiment("shape_vs_radius", SMALL["shape_vs_radius"])
    dist = res.column("max_shape_distortion")
    assert all(b <= a * 1.05 for a, b in zip(dist, dist[1:]))
    assert dist[-1] < dist[0]
    assert res.column("reversal_count")[-1] == 0


def test_shape_vs_radius_similarity_only():
    res = run_experiment("shape_vs_radius", {**SMALL["shape_vs_radius"], "maps": "similarity"})
    assert max(res.column("max_shape_distortion")) < 1e-9


def test_shape_vs_radius_rejects_small_radius():
    with pytest.raises(ConfigError):
        run_experiment("shape_vs_radius", {"radii": "0.5"})


def test_fullness_vs_k_trend():
    res = run_experiment("fullness_vs_k", SMALL["fullness_vs_k"])
    theta = float(res.meta["theta_probe"])
    by_k = {}
    for k, delta, full, rev in res.rows:
        by_k.setdefault(k, []).append((delta, full, rev))
    # identity at the finest scale keeps the sampled floor
    assert by_k[1.0][-1][1] >= theta * 0.98
    for k, rows in by_k.items():
        fulls = [f for _, f, _ in rows]
        assert all(b >= a * 0.95 for a, b in zip(fulls, fulls[1:]))
        assert rows[-1][2] == 0


def test_fullness_vs_k_rejects_k_below_one():
    with pytest.raises(ConfigError):
        run_experiment("fullness_vs_k", {"ks": "0.9"})


def test_secant_convergence_identity():
    res = run_experiment("secant_convergence", {"levels": "0..3", "n_random": "50"})
    assert all(res.column("certified"))
    assert set(res.column("degree")) == {1}
    c0 = res.column("c0_error")
    assert all(b < a for a, b in zip(c0[1:], c0[2:]))
    mesh = res.column("mesh_size")
    assert all(b < a for a, b in zip(mesh, mesh[1:]))


def test_secant_convergence_reflection_fails_with_result(tmp_path):
    with pytest.raises(CertificationFailed) as info:
        run_experiment("secant_convergence", {"map": "reflect", "levels": "0..1", "n_random": "20"},
                       tmp_path)
    result = info.value.args[1]
    assert isinstance(result, ProbeResult)
    assert result.meta["certification"] == "failed"
    assert set(result.column("degree")) == {-1}
    assert (tmp_path / "secant_convergence.csv").exists()


def test_commensurability_sphere_monotone():
    res = run_experiment("commensurability", {"levels": "1..3"})
    dev = res.column("max_deviation")
    assert dev[0] > dev[1] > dev[2] > 0
    assert res.column("flag") == ["first", "ok", "ok"]


def test_commensurability_flat_torus():
    res = run_experiment("commensurability", {"manifold": "clifford", "levels": "1..2"})
    assert max(res.column("max_deviation")) < 1e-12
    assert res.column("flag")[-1] == "ok"


def test_exp_bilipschitz_matches_analytic():
    res = run_experiment("exp_bilipschitz", {"deltas": "0.1,0.3,0.6"})
    for delta, measured, analytic in res.rows:
        assert analytic == pytest.approx(delta / math.sin(delta))
        assert abs(measured - analytic) < 1e-3


def test_exp_bilipschitz_delta_range():
    with pytest.raises(ConfigError):
        run_experiment("exp_bilipschitz", {"deltas": "4.0"})


def test_analytic_constant_flat_factor():
    assert analytic_exp_constant(parse_manifold("clifford"), 0.3) == 1.0


def test_numerical_guard_on_nan():
    res = ProbeResult("x", ["a", "b"], [(1.0, float("nan"))])
    with pytest.raises(NumericalGuard, match="b is nan"):
        res.check_numerics()


def test_infinity_allowed_only_where_declared():
    ok = ProbeResult("x", ["c0_error"], [(math.inf,)], inf_ok=("c0_error",))
    ok.check_numerics()
    with pytest.raises(NumericalGuard):
        ProbeResult("x", ["mesh_size"], [(math.inf,)]).check_numerics()


def test_csv_formatting():
    res = ProbeResult("x", ["a", "b", "c", "d"], [(0.1, True, None, np.int64(3))], {"seed": 0})
    assert res.to_csv() == "# experiment=x\n# seed=0\na,b,c,d\n0.1,true,,3\n"
