"""Local mutual information, covered information and their sign split.

Two independent routes to covered information live here:

* the closed form evaluated row by row from MRF factors
  (:func:`covered_info`, :func:`covered_info_row`), and
* a brute-force inclusion-exclusion over an explicit joint table
  (:func:`intersection_entropy`, :func:`oracle_covered_info`), used to
  validate the former.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import SubsampleSet, TabularDataset
from .graph import PrecisionModel
from .kernels import gaussian_log_ratio_rows, log_ratio_rows
from .mrf import LOG_CLAMP, DiscreteMRF, assemble_factors, gaussian_factors, log_ratio

SMOOTHING = 0.5


# -- plug-in estimates from binned data ------------------------------------

def local_mutual_info(data: TabularDataset, feature: int, alpha: float = SMOOTHING) -> np.ndarray:
    """Pointwise ``log p(x, y) / (p(x) p(y))`` on the binned empirical joint.

    ``alpha`` is added to every cell of the 2-D histogram; the marginals are
    taken from the smoothed joint.
    """
    xb = data.bin_index(feature)
    yb = data.bin_index(data.n_features)
    bx = len(data.midpoints(feature))
    by = len(data.midpoints(data.n_features))
    counts = np.bincount(xb * by + yb, minlength=bx * by).reshape(bx, by) + alpha
    p = counts / counts.sum()
    pmi = np.log(p) - np.log(p.sum(axis=1, keepdims=True)) - np.log(p.sum(axis=0, keepdims=True))
    return pmi[xb, yb]


def covered_info(
    model: PrecisionModel,
    data: TabularDataset,
    feature: int,
    local_mi: np.ndarray | None = None,
    backend: str | None = None,
) -> np.ndarray:
    """Per-row covered information ``h_mi - log ratio`` for one feature."""
    if local_mi is None:
        local_mi = local_mutual_info(data, feature)
    gf = gaussian_factors(model, data, feature)
    ratio = gaussian_log_ratio_rows(
        gf.node_x, gf.xs, gf.field_x, gf.node_y, gf.ys, gf.field_y, gf.log_F, gf.x_bin, gf.y_bin, LOG_CLAMP, backend
    )
    return local_mi - ratio


def covered_info_row(
    model: PrecisionModel, data: TabularDataset, feature: int, row: int, local_mi_value: float
) -> float:
    """Scalar reference path: :func:`assemble_factors` then :func:`log_ratio`."""
    return local_mi_value - log_ratio(assemble_factors(model, data, feature, row))


def split_redundant_synergistic(local_terms: np.ndarray, subsamples: SubsampleSet | Sequence[np.ndarray]):
    """Per-subsample positive-part and negative-part means of local terms.

    Returns two arrays of length ``len(subsamples)``.
    """
    h = np.asarray(local_terms, dtype=float)
    pos = np.maximum(h, 0.0)
    neg = np.abs(np.minimum(h, 0.0))
    plus = np.array([pos[s].mean() for s in subsamples])
    minus = np.array([neg[s].mean() for s in subsamples])
    return plus, minus


@dataclass(frozen=True)
class EntropyProfile:
    """Local terms (rows x features) and per-(feature, subsample) aggregates."""

    feature_names: tuple[str, ...]
    local_mi: np.ndarray
    local_ci: np.ndarray
    hc_plus: np.ndarray
    hc_minus: np.ndarray
    hmi_plus: np.ndarray
    hmi_minus: np.ndarray

    @property
    def n_subsamples(self) -> int:
        return self.hc_plus.shape[1]

    def features(self, feature: int) -> np.ndarray:
        """Subsample x 4 matrix ``(Hc+, Hc-, Hmi+, Hmi-)`` for one feature."""
        return np.column_stack(
            [self.hc_plus[feature], self.hc_minus[feature], self.hmi_plus[feature], self.hmi_minus[feature]]
        )

    def pooled(self) -> np.ndarray:
        """(features * subsamples) x 4 design matrix, feature-major."""
        return np.vstack([self.features(i) for i in range(len(self.feature_names))])

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "subsample", "Hc_plus", "Hc_minus", "Hmi_plus", "Hmi_minus"])
            for i, name in enumerate(self.feature_names):
                for s in range(self.n_subsamples):
                    w.writerow(
                        [name, s]
                        + [repr(float(a[i, s])) for a in (self.hc_plus, self.hc_minus, self.hmi_plus, self.hmi_minus)]
                    )

    @classmethod
    def read_csv(cls, path: str | Path) -> dict[str, np.ndarray]:
        """Aggregates only, keyed by column name, each features x subsamples."""
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        names = list(dict.fromkeys(r["feature"] for r in rows))
        n_sub = 1 + max(int(r["subsample"]) for r in rows)
        out = {k: np.zeros((len(names), n_sub)) for k in ("Hc_plus", "Hc_minus", "Hmi_plus", "Hmi_minus")}
        for r in rows:
            i, s = names.index(r["feature"]), int(r["subsample"])
            for k in out:
                out[k][i, s] = float(r[k])
        return out


def entropy_profile(
    model: PrecisionModel,
    data: TabularDataset,
    subsamples: SubsampleSet,
    backend: str | None = None,
) -> EntropyProfile:
    """Local MI and covered information for every feature, split per subsample."""
    n = data.n_features
    local_mi = np.column_stack([local_mutual_info(data, i) for i in range(n)])
    local_ci = np.empty_like(local_mi)
    for i in range(n):
        try:
            local_ci[:, i] = covered_info(model, data, i, local_mi[:, i], backend=backend)
        except ArithmeticError as exc:
            raise ArithmeticError(f"covered information failed for feature {data.feature_names[i]!r}: {exc}") from exc
    aggregates = {k: np.zeros((n, len(subsamples))) for k in ("cp", "cm", "mp", "mm")}
    for i in range(n):
        aggregates["cp"][i], aggregates["cm"][i] = split_redundant_synergistic(local_ci[:, i], subsamples)
        aggregates["mp"][i], aggregates["mm"][i] = split_redundant_synergistic(local_mi[:, i], subsamples)
    return EntropyProfile(
        data.feature_names,
        local_mi,
        local_ci,
        aggregates["cp"],
        aggregates["cm"],
        aggregates["mp"],
        aggregates["mm"],
    )


# -- explicit joint tables ------------------------------------------------

def _check_joint(joint):
    joint = np.asarray(joint, dtype=float)
    if np.any(joint < 0) or abs(joint.sum() - 1.0) > 1e-12:
        raise ValueError("joint table must be nonnegative and sum to 1")
    return joint


def _local_entropy(joint, axes):
    """``-log p(x_axes)`` broadcast over the full table (0 where p = 0)."""
    others = tuple(a for a in range(joint.ndim) if a not in axes)
    marg = joint.sum(axis=others, keepdims=True) if others else joint
    with np.errstate(divide="ignore"):
        h = -np.log(marg)
    return np.broadcast_to(np.where(marg > 0, h, 0.0), joint.shape)


def union_entropy(joint: np.ndarray, axes: Sequence[int] | None = None) -> float:
    """Joint entropy of the variables on ``axes`` (all axes by default)."""
    joint = _check_joint(joint)
    axes = tuple(range(joint.ndim)) if axes is None else tuple(axes)
    return float(np.sum(joint * _local_entropy(joint, axes)))


def local_intersection_entropy(joint: np.ndarray, blocks: Sequence[Sequence[int]]) -> np.ndarray:
    """Alternating sum of local entropies over every nonempty union of blocks."""
    joint = _check_joint(joint)
    h = np.zeros(joint.shape)
    for k in range(1, len(blocks) + 1):
        for combo in itertools.combinations(blocks, k):
            axes = tuple(sorted(set(itertools.chain.from_iterable(combo))))
            h = h + (-1) ** (k - 1) * _local_entropy(joint, axes)
    return h


def intersection_entropy(joint: np.ndarray, blocks: Sequence[Sequence[int]]) -> float:
    """Co-information of the blocks (a block is a tuple of merged axes)."""
    joint = _check_joint(joint)
    return float(np.sum(joint * local_intersection_entropy(joint, blocks)))


def mutual_information(joint: np.ndarray, a: int, b: int) -> float:
    joint = _check_joint(joint)
    return union_entropy(joint, (a,)) + union_entropy(joint, (b,)) - union_entropy(joint, (a, b))


def _rest(joint, feature, target):
    return tuple(a for a in range(joint.ndim) if a not in (feature, target))


def oracle_covered_info(joint: np.ndarray, feature: int, target: int = -1) -> float:
    """Covered information by direct enumeration of the three-block co-information.

    Blocks: ``{feature}``, ``{target}`` and every remaining axis merged.
    """
    joint = _check_joint(joint)
    target = target % joint.ndim
    return intersection_entropy(joint, [(feature,), (target,), _rest(joint, feature, target)])


def covered_info_expansion(joint: np.ndarray, feature: int, target: int = -1) -> float:
    """``I(X;Y) + H(X,Y,W) - H(W,Y) + H(W) - H(X,W)`` with ``W`` the rest."""
    joint = _check_joint(joint)
    target = target % joint.ndim
    w = _rest(joint, feature, target)
    return (
        mutual_information(joint, feature, target)
        + union_entropy(joint, (feature, target, *w))
        - union_entropy(joint, (*w, target))
        + union_entropy(joint, w)
        - union_entropy(joint, (feature, *w))
    )


def exact_local_mi(joint: np.ndarray, feature: int, target: int) -> np.ndarray:
    """Pointwise MI of (feature, target) broadcast over the full table."""
    return (
        _local_entropy(joint, (feature,))
        + _local_entropy(joint, (target,))
        - _local_entropy(joint, tuple(sorted((feature, target))))
    )


def closed_form_local_ci(mrf: DiscreteMRF, feature: int, target: int, backend: str | None = None):
    """Closed-form local covered information at every joint state.

    Returns ``(states, local_ci, joint)``, with ``local_ci`` aligned to
    ``states`` rows.
    """
    joint = mrf.joint()
    states = mrf.states()
    rf = mrf.row_factors(feature, target, states)
    ratio = log_ratio_rows(rf.log_d, rf.log_F, rf.log_e, rf.x_bin, rf.y_bin, backend=backend)
    h_mi = exact_local_mi(joint, feature, target)[tuple(states.T)]
    return states, h_mi - ratio, joint


def closed_form_covered_info(mrf: DiscreteMRF, feature: int, target: int, backend: str | None = None) -> float:
    """Expectation of :func:`closed_form_local_ci` under the exact joint."""
    states, local_ci, joint = closed_form_local_ci(mrf, feature, target, backend)
    return float(np.sum(joint[tuple(states.T)] * local_ci))
