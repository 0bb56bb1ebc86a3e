"""Per-cell numeric kernels with a selectable backend.

The numba backend is used when numba imports and ``QCPL_NUMBA`` is not set
to a false value (``0``, ``false``, ``no``, ``off``). Otherwise the pure
numpy backend runs. Both backends share one contract and are checked
against each other in the test suite.
"""
import os

import numpy as np

from . import _numpy

_FALSE = {"0", "false", "no", "off"}


def _load_numba():
    try:
        from . import _numba
    except ImportError:  # pragma: no cover
        return None
    return _numba


def get_backend(name):
    """Return the kernel module for ``"numba"`` or ``"numpy"``."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        mod = _load_numba()
        if mod is None:  # pragma: no cover
            raise ImportError("numba backend unavailable")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def _select():
    if os.environ.get("QCPL_NUMBA", "1").strip().lower() in _FALSE:
        return "numpy", _numpy
    mod = _load_numba()
    if mod is None:  # pragma: no cover
        return "numpy", _numpy
    return "numba", mod


BACKEND, _impl = _select()


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def simplex_volumes(base):
    base = _f64(base)
    if base.shape[1] == 0:
        return np.ones(base.shape[0])
    return _impl.simplex_volumes(base)


def vertex_diameters(pts):
    return _impl.vertex_diameters(_f64(pts))


def projected_dets(frames, base):
    return _impl.projected_dets(_f64(frames), _f64(base))


def origin_barycentric(simplices):
    return _impl.origin_barycentric(_f64(simplices))


def hull_max_distance(pts, block_starts, radii):
    return _impl.hull_max_distance(
        _f64(pts), np.ascontiguousarray(block_starts, dtype=np.int64), _f64(radii)
    )


def fullness(points, signed_frames=None):
    """Fullness vol/diam^k of stacked simplices given as (c, k+1, m) points.

    With ``signed_frames`` (c, k, m) the value carries the sign of the base
    vectors expressed in the frame (top-dimensional case).
    """
    points = _f64(points)
    base = points[:, 1:, :] - points[:, :1, :]
    k = base.shape[1]
    vol = simplex_volumes(base)
    diam = vertex_diameters(points)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(diam > 0, vol / np.where(diam > 0, diam, 1.0) ** k, 0.0)
    if signed_frames is not None:
        val = val * np.sign(projected_dets(signed_frames, base))
    return val
