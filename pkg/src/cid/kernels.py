"""Backend selection for the covered-information hot loop.

The compiled extension is used when it was built; set ``CID_PURE_PYTHON=1``
to force the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels.log_ratio_rows}
GAUSSIAN_BACKENDS = {"python": _pykernels.gaussian_log_ratio_rows}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels.log_ratio_rows
    GAUSSIAN_BACKENDS["compiled"] = _ckernels.gaussian_log_ratio_rows

if _ckernels is not None and os.environ.get("CID_PURE_PYTHON", "") not in ("1", "true", "yes"):
    BACKEND = "compiled"
else:
    BACKEND = "python"


class DegeneratePotentialError(ArithmeticError):
    """A log-sum-exp reduction collapsed to -inf or produced NaN."""


def log_ratio_rows(log_d, log_F, log_e, xbin, ybin, backend: str | None = None) -> np.ndarray:
    """``log f + log(d'Fe) - log(d'F_y) - log(F_x e)`` for every row.

    ``log_d`` is rows x Bx, ``log_F`` is Bx x By, ``log_e`` is rows x By;
    ``xbin``/``ybin`` give the observed cell of each row.
    """
    fn = BACKENDS[backend or BACKEND]
    log_d = np.ascontiguousarray(log_d, dtype=np.float64)
    log_F = np.ascontiguousarray(log_F, dtype=np.float64)
    log_e = np.ascontiguousarray(log_e, dtype=np.float64)
    xbin = np.ascontiguousarray(xbin, dtype=np.intp)
    ybin = np.ascontiguousarray(ybin, dtype=np.intp)
    if log_d.shape[1] != log_F.shape[0] or log_e.shape[1] != log_F.shape[1]:
        raise ValueError("factor shapes do not match")
    if log_d.shape[0] != log_e.shape[0] or len(xbin) != log_d.shape[0] or len(ybin) != log_d.shape[0]:
        raise ValueError("row counts do not match")
    _check_bins(xbin, ybin, log_F.shape)
    return _check_finite(fn(log_d, log_F, log_e, xbin, ybin))


def gaussian_log_ratio_rows(
    node_x, xs, field_x, node_y, ys, field_y, log_F, xbin, ybin, clamp: float, backend: str | None = None
) -> np.ndarray:
    """:func:`log_ratio_rows` with Gaussian factors built row by row.

    ``log d[k, b] = max(node_x[b] - field_x[k] * xs[b], clamp)`` and likewise
    for ``log e`` from the ``y`` arguments.  Avoids materializing the
    rows x B factor matrices.
    """
    fn = GAUSSIAN_BACKENDS[backend or BACKEND]
    vec = [np.ascontiguousarray(a, dtype=np.float64) for a in (node_x, xs, field_x, node_y, ys, field_y)]
    node_x, xs, field_x, node_y, ys, field_y = vec
    log_F = np.ascontiguousarray(log_F, dtype=np.float64)
    xbin = np.ascontiguousarray(xbin, dtype=np.intp)
    ybin = np.ascontiguousarray(ybin, dtype=np.intp)
    if log_F.shape != (len(xs), len(ys)) or len(node_x) != len(xs) or len(node_y) != len(ys):
        raise ValueError("factor shapes do not match")
    if not len(field_x) == len(field_y) == len(xbin) == len(ybin):
        raise ValueError("row counts do not match")
    _check_bins(xbin, ybin, log_F.shape)
    return _check_finite(fn(node_x, xs, field_x, node_y, ys, field_y, log_F, xbin, ybin, float(clamp)))


def _check_bins(xbin, ybin, shape):
    if len(xbin) and (xbin.min() < 0 or xbin.max() >= shape[0]):
        raise IndexError("xbin out of range")
    if len(ybin) and (ybin.min() < 0 or ybin.max() >= shape[1]):
        raise IndexError("ybin out of range")


def _check_finite(out):
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise DegeneratePotentialError(f"non-finite log ratio at row {bad}")
    return out
