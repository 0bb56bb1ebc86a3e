"""Secant PL approximation of quasiconformal maps between embedded manifolds."""
from .errors import QcplError
from .geom import (
    INFINITY,
    Configuration,
    MoebiusTransform,
    Shape,
    Similarity,
    moebius_apply,
    moebius_compose,
    shape_distance,
    shape_of,
)
from .manifolds import EmbeddedManifold, clifford_torus, parse_manifold, s3xs3, sphere
from .qcmaps import estimate_global_dilatation, estimate_pointwise_dilatation, parse_map
from .secant import certify, report, secant_approximate
from .simplex import Simplex, affine_ellipticity, fullness, fullness_signed, linear_dilatation
from .triangulation import audit, load_off, refine, save_off, seed, subdivide, validate

__version__ = "0.1.0"

__all__ = [
    "QcplError",
    "INFINITY",
    "Configuration",
    "MoebiusTransform",
    "Shape",
    "Similarity",
    "moebius_apply",
    "moebius_compose",
    "shape_distance",
    "shape_of",
    "EmbeddedManifold",
    "clifford_torus",
    "parse_manifold",
    "s3xs3",
    "sphere",
    "estimate_global_dilatation",
    "estimate_pointwise_dilatation",
    "parse_map",
    "certify",
    "report",
    "secant_approximate",
    "Simplex",
    "affine_ellipticity",
    "fullness",
    "fullness_signed",
    "linear_dilatation",
    "audit",
    "load_off",
    "refine",
    "save_off",
    "seed",
    "subdivide",
    "validate",
]
