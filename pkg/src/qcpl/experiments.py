"""Experiment harness: empirical probes written as deterministic CSV tables.

Each experiment reads a flat ``key=value`` config, seeds every grid cell
with ``(seed, cell index)`` and returns a :class:`ProbeResult`. Output
floats use ``repr`` so a fixed seed gives byte-identical files.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CertificationFailed, ConfigError, NoRegularValue, NumericalGuard, OutsideTube
from .geom import MoebiusTransform, Rotation, Scaling, SphereInversion, Translation, random_rotation
from .manifolds import exp_bilipschitz_constant, internal_fullness_batch, parse_manifold
from .qcmaps import parse_map
from .secant import certify, report, secant_approximate
from .triangulation import refine, regular_fullness

EXPERIMENTS = (
    "shape_vs_radius",
    "fullness_vs_k",
    "secant_convergence",
    "commensurability",
    "exp_bilipschitz",
)


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


def parse_config(text: str) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        if not eq or not key.strip():
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        out[key.strip()] = val.strip()
    return out


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _floats(val):
    try:
        return [float(v) for v in str(val).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {val!r}") from None


def parse_levels(val):
    """``2..5`` or ``1,2,3``."""
    val = str(val).strip()
    try:
        if ".." in val:
            a, b = val.split("..")
            lv = list(range(int(a), int(b) + 1))
        else:
            lv = [int(v) for v in val.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad level range {val!r}") from None
    if not lv or min(lv) < 0:
        raise ConfigError(f"bad level range {val!r}")
    return lv


@dataclass
class ExperimentConfig:
    experiment_id: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, experiment_id, params):
        if experiment_id not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment_id!r}; choose from {', '.join(EXPERIMENTS)}")
        params = dict(params)
        seed = params.pop("seed", 0)
        env = os.environ.get("QCPL_SEED")
        if env is not None and env.strip():
            seed = env
        try:
            seed = int(seed)
        except ValueError:
            raise ConfigError(f"seed must be an integer, got {seed!r}") from None
        params.pop("experiment", None)
        return cls(experiment_id, params, seed)

    def get(self, key, default=None):
        return self.params.get(key, default)

    def rng(self, cell):
        return np.random.default_rng([self.seed, cell])


@dataclass
class ProbeResult:
    experiment_id: str
    columns: list
    rows: list
    meta: dict = field(default_factory=dict)
    inf_ok: tuple = ()

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def check_numerics(self):
        for r in self.rows:
            for name, v in zip(self.columns, r):
                if isinstance(v, float) and (math.isnan(v) or (math.isinf(v) and name not in self.inf_ok)):
                    raise NumericalGuard(f"{self.experiment_id}: {name} is {v}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# experiment={self.experiment_id}\n")
        for k in sorted(self.meta):
            buf.write(f"# {k}={self.meta[k]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


# --------------------------------------------------------------------------
# shapes of simplices in R^d
# --------------------------------------------------------------------------


def signed_fullness_flat(pts):
    """Signed fullness of d-simplices (c, d+1, d) in R^d."""
    base = pts[:, 1:, :] - pts[:, :1, :]
    vol = np.linalg.det(base) / math.factorial(base.shape[1])
    diam = kernels.vertex_diameters(pts)
    return vol / diam ** base.shape[1]


def sample_full_simplices(rng, n, d, theta, radius=1.0, max_rounds=1000):
    """n positively oriented d-simplices in B(0, radius) with fullness >= theta."""
    out = []
    have = 0
    for _ in range(max_rounds):
        g = rng.standard_normal((4 * n, d + 1, d))
        g *= (radius * rng.uniform(0, 1, (4 * n, d + 1, 1)) ** (1.0 / d)) / np.linalg.norm(
            g, axis=2, keepdims=True
        )
        full = signed_fullness_flat(g)
        neg = full < 0
        g[neg] = g[neg][:, [1, 0] + list(range(2, d + 1))]
        g = g[np.abs(full) >= theta]
        out.append(g)
        have += len(g)
        if have >= n:
            return np.concatenate(out)[:n]
    raise ConfigError(f"could not sample simplices with fullness >= {theta}")


def batch_shape_distance(a, b):
    """Procrustes shape distance between stacked configurations (c, r, d)."""
    def canon(x):
        x = x - x.mean(axis=1, keepdims=True)
        return x / np.linalg.norm(x, axis=(1, 2), keepdims=True)

    a, b = canon(a), canon(b)
    h = a.transpose(0, 2, 1) @ b
    u, _, vt = np.linalg.svd(h)
    det = np.sign(np.linalg.det(u @ vt))
    dfix = np.ones((len(a), a.shape[2]))
    dfix[:, -1] = det
    rot = (u * dfix[:, None, :]) @ vt  # rotation taking a onto b
    return np.linalg.norm(a @ rot - b, axis=(1, 2))


def moebius_on_ball(rng, d, radius):
    """Orientation-preserving Moebius map, finite on B(0, radius).

    Two inversions: the first about a point a, the second about the image of
    b, so the only point sent to infinity is b. Both a and b lie at distance
    in [radius, 2 radius]. A random similarity follows.
    """
    def far_point():
        u = rng.standard_normal(d)
        return radius * rng.uniform(1.0, 2.0) * u / np.linalg.norm(u)

    a, b = far_point(), far_point()
    inv1 = SphereInversion(a, 1.0)
    c2 = inv1.apply(b[None])[0]
    inv2 = SphereInversion(c2, 1.0)
    word = (inv1, inv2, Rotation(random_rotation(d, rng)), Scaling(float(rng.uniform(0.5, 2.0)), d),
            Translation(rng.normal(0, 1, d)))
    return MoebiusTransform(d, word)


def random_similarity_word(rng, d):
    return MoebiusTransform(d, (Rotation(random_rotation(d, rng)), Scaling(float(rng.uniform(0.5, 2.0)), d),
                                Translation(rng.normal(0, 1, d))))


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def run_shape_vs_radius(cfg: ExperimentConfig) -> ProbeResult:
    d = int(cfg.get("d", 2))
    radii = _floats(cfg.get("radii", "1.5,2,3,5,8,13,21"))
    n_maps = int(cfg.get("n_maps", 20))
    n_simplices = int(cfg.get("n_simplices", 200))
    theta = float(cfg.get("theta_probe", 0.5 * regular_fullness(d)))
    maps = cfg.get("maps", "moebius")
    if maps not in ("moebius", "similarity"):
        raise ConfigError("maps must be 'moebius' or 'similarity'")
    if any(r <= 1.0 for r in radii):
        raise ConfigError("radii must exceed 1 so the unit ball sits inside B(0, R)")
    rows = []
    for i, radius in enumerate(radii):
        rng = cfg.rng(i)
        simp = sample_full_simplices(rng, n_simplices, d, theta)
        worst, min_full, reversals = 0.0, math.inf, 0
        for _ in range(n_maps):
            mu = moebius_on_ball(rng, d, radius) if maps == "moebius" else random_similarity_word(rng, d)
            out = mu.apply_array(simp.reshape(-1, d)).reshape(simp.shape)
            worst = max(worst, float(batch_shape_distance(simp, out).max()))
            full = signed_fullness_flat(out)
            min_full = min(min_full, float(full.min()))
            reversals += int((full < 0).sum())
        rows.append((radius, worst, min_full, reversals))
    return ProbeResult(
        "shape_vs_radius",
        ["R", "max_shape_distortion", "min_output_fullness", "reversal_count"],
        rows,
        {"d": d, "theta_probe": repr(theta), "n_maps": n_maps, "n_simplices": n_simplices,
         "maps": maps, "seed": cfg.seed},
    )


def stretch_flat(z, k):
    """z -> z |z|^(k-1) on R^d."""
    r = np.linalg.norm(z, axis=-1, keepdims=True)
    return z * r ** (k - 1.0)


def run_fullness_vs_k(cfg: ExperimentConfig) -> ProbeResult:
    """Radial stretches of R^d precomposed with a Moebius map, on a compact C.

    C is the ball of radius 0.5 about (1, 0, ..., 0); the Moebius map keeps
    C away from the stretch centre.
    """
    d = int(cfg.get("d", 2))
    ks = _floats(cfg.get("ks", "1.0,1.1,1.2,1.3,1.5"))
    deltas = sorted(_floats(cfg.get("deltas", "0.4,0.2,0.1,0.05,0.025,0.0125")), reverse=True)
    n_simplices = int(cfg.get("n_simplices", 400))
    theta = float(cfg.get("theta_probe", 0.5 * regular_fullness(d)))
    if any(k < 1.0 for k in ks):
        raise ConfigError("nominal K must be >= 1")
    center = np.zeros(d)
    center[0] = 1.0
    rows = []
    for i, k in enumerate(ks):
        rng = cfg.rng(i)
        shapes = sample_full_simplices(rng, n_simplices, d, theta)
        shapes -= shapes.mean(axis=1, keepdims=True)
        shapes /= kernels.vertex_diameters(shapes)[:, None, None]
        offs = rng.standard_normal((n_simplices, d))
        offs *= 0.5 * rng.uniform(0, 1, (n_simplices, 1)) ** (1.0 / d) / np.linalg.norm(
            offs, axis=1, keepdims=True
        )
        # Moebius map fixing (1, 0, ..) region: inversion about a far point
        far = np.zeros(d)
        far[0] = -2.0
        mu = MoebiusTransform(d, (SphereInversion(far, 3.0), SphereInversion(far + 0.3, 3.0)))
        for delta in deltas:
            pts = center + offs[:, None, :] + delta * shapes
            out = stretch_flat(mu.apply_array(pts.reshape(-1, d)), k).reshape(pts.shape)
            full = signed_fullness_flat(out)
            rows.append((k, delta, float(full.min()), int((full < 0).sum())))
    return ProbeResult(
        "fullness_vs_k",
        ["K", "delta", "min_output_fullness", "reversal_count"],
        rows,
        {"d": d, "theta_probe": repr(theta), "n_simplices": n_simplices, "seed": cfg.seed},
    )


def run_secant_convergence(cfg: ExperimentConfig) -> ProbeResult:
    man_id = cfg.get("manifold", "sphere:d=2,r=1")
    man = parse_manifold(man_id)
    expr = cfg.get("map", "id")
    f = parse_map(expr, man)
    levels = parse_levels(cfg.get("levels", "0..4"))
    n_random = int(cfg.get("n_random", 1000))
    rows = []
    certified = []
    for i, level in enumerate(levels):
        t = refine(man, level)
        pl = secant_approximate(f, t)
        try:
            cert = certify(pl, seed=cfg.seed)
            ok, degree, n_neg = cert.is_pl_homeomorphism, cert.degree, cert.n_negative
        except NoRegularValue:
            ok, degree, n_neg = False, None, None
        try:
            rep = report(f, pl, n_random=n_random, seed=cfg.seed + i)
            c0, ell, full = rep.c0_error, rep.max_affine_ellipticity, rep.min_image_fullness
            mesh = rep.mesh_size
        except OutsideTube:
            # the PL map is undefined where the secant image leaves the tube
            c0, ell, full = math.inf, math.inf, None
            mesh = float(kernels.vertex_diameters(t.vertices[t.cells]).max())
        certified.append(ok)
        rows.append((level, mesh, c0, ell, full, ok, degree, n_neg))
    result = ProbeResult(
        "secant_convergence",
        ["level", "mesh_size", "c0_error", "max_ellipticity", "min_fullness",
         "certified", "degree", "n_negative"],
        rows,
        {"manifold": man.id, "map": expr, "seed": cfg.seed},
        inf_ok=("c0_error", "max_ellipticity"),
    )
    tail = certified[-2:]
    if not any(tail):
        result.meta["certification"] = "failed"
        raise CertificationFailed(
            f"{expr} on {man.id} does not certify at levels {levels[-2:]}", result
        )
    return result


def commensurability_deviation(man, t):
    pts = t.vertices[t.cells]
    internal = internal_fullness_batch(man, pts)
    frames = man.tangent_frame(pts[:, 0])
    ambient = kernels.fullness(pts, signed_frames=frames)
    return float(np.max(np.abs(internal / ambient - 1.0)))


def run_commensurability(cfg: ExperimentConfig) -> ProbeResult:
    man = parse_manifold(cfg.get("manifold", "sphere:d=2,r=1"))
    levels = parse_levels(cfg.get("levels", "1..3"))
    flat_tol = float(cfg.get("flat_tol", 1e-12))
    rows = []
    prev = None
    for level in levels:
        t = refine(man, level)
        mesh = float(kernels.vertex_diameters(t.vertices[t.cells]).max())
        dev = commensurability_deviation(man, t)
        if prev is None:
            flag = "first"
        elif dev < prev or max(dev, prev) <= flat_tol:
            flag = "ok"
        else:
            flag = "non-monotone"
        rows.append((level, mesh, dev, flag))
        prev = dev
    return ProbeResult(
        "commensurability",
        ["level", "mesh_size", "max_deviation", "flag"],
        rows,
        {"manifold": man.id, "seed": cfg.seed},
    )


def analytic_exp_constant(man, delta):
    """delta/sin(delta) on the most curved factor of dimension >= 2, else 1."""
    best = 1.0
    for k, r in man.factors:
        if k >= 2:
            a = delta / r
            best = max(best, a / math.sin(a))
    return best


def run_exp_bilipschitz(cfg: ExperimentConfig) -> ProbeResult:
    man = parse_manifold(cfg.get("manifold", "sphere:d=2,r=1"))
    deltas = _floats(cfg.get("deltas", "0.05,0.1,0.2,0.3,0.6"))
    if any(not 0 < dl < man.injectivity_radius for dl in deltas):
        raise ConfigError("every delta must lie in (0, injectivity radius)")
    rows = []
    for i, delta in enumerate(deltas):
        rng = cfg.rng(i)
        x = man.random_points(1, rng)[0]
        measured = exp_bilipschitz_constant(man, x, delta, seed=int(rng.integers(2**31)))
        rows.append((delta, measured, analytic_exp_constant(man, delta)))
    return ProbeResult(
        "exp_bilipschitz",
        ["delta", "measured_L", "analytic_L"],
        rows,
        {"manifold": man.id, "seed": cfg.seed},
    )


RUNNERS = {
    "shape_vs_radius": run_shape_vs_radius,
    "fullness_vs_k": run_fullness_vs_k,
    "secant_convergence": run_secant_convergence,
    "commensurability": run_commensurability,
    "exp_bilipschitz": run_exp_bilipschitz,
}


def run_experiment(experiment_id, params=None, out_dir=None) -> ProbeResult:
    """Run one experiment; with ``out_dir`` also write ``<experiment_id>.csv``."""
    cfg = ExperimentConfig.from_dict(experiment_id, params or {})
    try:
        result = RUNNERS[experiment_id](cfg)
    except CertificationFailed as exc:
        if out_dir is not None and len(exc.args) > 1:
            write_result(exc.args[1], out_dir)
        raise
    result.check_numerics()
    if out_dir is not None:
        write_result(result, out_dir)
    return result


def write_result(result: ProbeResult, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{result.experiment_id}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(result.to_csv())
    return path
