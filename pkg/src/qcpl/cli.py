"""Command line entry point ``qcpl``.

Exit codes: 0 success, 1 configuration error, 2 certification failure,
3 numerical guard (NaN or unexpected infinity in an output).
"""
from __future__ import annotations

import argparse
import json
import math
import sys

from .errors import CertificationFailed, NumericalGuard, QcplError
from .experiments import EXPERIMENTS, load_config, parse_levels, run_experiment
from .manifolds import parse_manifold
from .qcmaps import estimate_global_dilatation, parse_map
from .secant import certify, convergence_csv, report, run_to_json, secant_approximate
from .triangulation import audit, dumps_off, load_off, refine, save_off, seed, subdivide, validate

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_NUMERIC = 0, 1, 2, 3


def _out(text, path=None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _guard(values):
    for k, v in values.items():
        if isinstance(v, float) and math.isnan(v):
            raise NumericalGuard(f"{k} is NaN")


def cmd_seed(args):
    man = parse_manifold(args.manifold)
    t = seed(man, args.n)
    if hasattr(t, "materialize"):
        t = t.materialize()
    _out(dumps_off(t), args.out)
    return EXIT_OK


def cmd_subdivide(args):
    man = parse_manifold(args.manifold)
    t = load_off(args.input, man)
    for _ in range(args.levels):
        t = subdivide(t, man)
    if args.out:
        save_off(t, args.out)
    else:
        _out(dumps_off(t))
    return EXIT_OK


def cmd_audit(args):
    man = parse_manifold(args.manifold)
    t = load_off(args.input, man)
    rep = validate(t)
    a = audit(t, man)
    out = {"valid": rep.valid, "violations": rep.violations[:10], **a.to_dict()}
    _guard({k: v for k, v in out.items() if isinstance(v, float)})
    _out(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK if rep.valid else EXIT_CONFIG


def cmd_dilatation(args):
    man = parse_manifold(args.manifold)
    f = parse_map(args.map, man)
    est = estimate_global_dilatation(f, n_points=args.points, r0=args.r0, k=args.k, n=args.samples,
                                     seed=args.seed, level=args.level)
    out = {
        "manifold": man.id,
        "map": args.map,
        "nominal_dilatation": f.nominal_dilatation,
        "pointwise_max": est.pointwise_max,
        "at_point": [float(v) for v in est.at_point],
        "radius_schedule": est.radius_schedule,
        "samples_per_sphere": est.samples_per_sphere,
        "per_radius_values": est.per_radius_values,
        "seed": args.seed,
    }
    _guard({"pointwise_max": est.pointwise_max})
    _out(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_secant(args):
    man = parse_manifold(args.manifold)
    f = parse_map(args.map, man)
    levels = parse_levels(args.levels)
    runs, rows = [], []
    certified = []
    for level in levels:
        t = refine(man, level)
        pl = secant_approximate(f, t)
        cert = certify(pl, seed=args.seed)
        rep = None
        if not args.no_report:
            rep = report(f, pl, n_random=args.random, seed=args.seed)
            if math.isnan(rep.c0_error):
                raise NumericalGuard("c0_error is NaN")
        meta = {"map": args.map, "manifold": man.id, "level": level, "seed": args.seed}
        runs.append(json.loads(run_to_json(cert, rep, meta)))
        certified.append(cert.is_pl_homeomorphism)
        row = {"level": level, "certified": cert.is_pl_homeomorphism, "degree": cert.degree}
        if rep is not None:
            row.update(mesh_size=rep.mesh_size, c0_error=rep.c0_error,
                       max_ellipticity=rep.max_affine_ellipticity, min_fullness=rep.min_image_fullness)
        rows.append(row)
        print(f"level {level}: degree={cert.degree} certified={cert.is_pl_homeomorphism}"
              + (f" c0_error={rep.c0_error:.3e}" if rep else ""), file=sys.stderr)
    _out(json.dumps({"runs": runs}, indent=2, sort_keys=True) + "\n", args.out)
    if args.csv:
        _out(convergence_csv(rows, {"map": args.map, "manifold": man.id, "seed": args.seed}), args.csv)
    return EXIT_OK if certified[-1] else EXIT_CERT


def cmd_experiment(args):
    params = load_config(args.config) if args.config else {}
    result = run_experiment(args.experiment_id, params, args.out)
    if not args.out:
        _out(result.to_csv())
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not certification failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="qcpl", description="Secant PL approximation of quasiconformal maps.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("seed", help="write the seed triangulation of a manifold as OFF")
    s.add_argument("manifold")
    s.add_argument("--n", type=int, default=3, help="grid size for the Clifford torus")
    s.add_argument("--out")
    s.set_defaults(func=cmd_seed)

    s = sub.add_parser("subdivide", help="edgewise-subdivide an OFF mesh")
    s.add_argument("input")
    s.add_argument("--manifold", required=True)
    s.add_argument("--levels", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_subdivide)

    s = sub.add_parser("audit", help="validate an OFF mesh and report fullness")
    s.add_argument("input")
    s.add_argument("--manifold", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("dilatation", help="estimate the global dilatation of a catalog map")
    s.add_argument("--manifold", required=True)
    s.add_argument("--map", required=True)
    s.add_argument("--points", type=int, default=200)
    s.add_argument("--r0", type=float, default=0.01)
    s.add_argument("--k", type=int, default=6)
    s.add_argument("--samples", type=int, default=64)
    s.add_argument("--level", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_dilatation)

    s = sub.add_parser("secant", help="certify the secant approximation across levels")
    s.add_argument("--manifold", required=True)
    s.add_argument("--map", required=True)
    s.add_argument("--levels", default="0..3", help="A..B or a comma list")
    s.add_argument("--out", help="JSON report path")
    s.add_argument("--csv", help="convergence table path")
    s.add_argument("--random", type=int, default=1000, help="random probe points")
    s.add_argument("--no-report", action="store_true", help="certify only")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_secant)

    s = sub.add_parser("experiment", help="run an experiment and write its CSV")
    s.add_argument("experiment_id", choices=EXPERIMENTS)
    s.add_argument("--config")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CertificationFailed as exc:
        print(f"qcpl: certification failed: {exc.args[0]}", file=sys.stderr)
        return EXIT_CERT
    except NumericalGuard as exc:
        print(f"qcpl: numerical guard: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (QcplError, OSError) as exc:
        print(f"qcpl: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
