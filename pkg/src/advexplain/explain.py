"""Exact Shapley attributions of a tree ensemble's margin output.

The coalition value function is the path-dependent conditional expectation:
walk each tree, follow ``x``'s branch at splits on coalition features and take
the cover-weighted average of both children elsewhere. ``shap_fast`` is the
polynomial path-extension algorithm (compiled kernel); ``shap_brute_force``
enumerates all coalitions and is kept as an independent oracle.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import factorial
from pathlib import Path

import numpy as np

from . import _backend
from .dataset import LabeledDataset
from .errors import CapacityError, SchemaMismatchError
from .gbt import TreeEnsemble

BRUTE_FORCE_MAX_FEATURES = 15
THREADS_ENV = "ADVEXPLAIN_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _as_vector(model: TreeEnsemble, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValueError(f"expected a vector of {model.n_features} features, got shape {x.shape}")
    return x


def tree_value_function(model: TreeEnsemble, x, coalition) -> float:
    """Expected margin given only the features in ``coalition`` are known."""
    x = _as_vector(model, x)
    known = set(int(j) for j in coalition)
    if any(j < 0 or j >= model.n_features for j in known):
        raise ValueError(f"coalition {sorted(known)} outside 0..{model.n_features - 1}")
    total = model.base_score
    for t in model.trees:
        feature, thr, left, right = t.feature.tolist(), t.threshold.tolist(), t.left.tolist(), t.right.tolist()
        value, cover = t.value.tolist(), t.cover.tolist()

        def v(k):
            f = feature[k]
            if f < 0:
                return value[k]
            if f in known:
                return v(left[k] if x[f] < thr[k] else right[k])
            lo, hi = left[k], right[k]
            return (cover[lo] * v(lo) + cover[hi] * v(hi)) / cover[k]

        total += v(0)
    return total


def coalition_values(model: TreeEnsemble, x) -> np.ndarray:
    """Value of every coalition at once; entry ``mask`` holds v({j : bit j of mask set})."""
    x = _as_vector(model, x)
    n = model.n_features
    masks = np.arange(1 << n, dtype=np.int64)
    member = [((masks >> j) & 1).astype(bool) for j in range(n)]
    total = np.full(1 << n, model.base_score)
    for t in model.trees:

        def v(k):
            f = t.feature[k]
            if f < 0:
                return np.full(1 << n, t.value[k])
            lo, hi = t.left[k], t.right[k]
            vl, vr = v(lo), v(hi)
            followed = vl if x[f] < t.threshold[k] else vr
            averaged = (t.cover[lo] * vl + t.cover[hi] * vr) / t.cover[k]
            return np.where(member[f], followed, averaged)

        total = total + v(0)
    return total


def shap_brute_force(model: TreeEnsemble, x) -> np.ndarray:
    """Shapley values by explicit coalition enumeration (2**n value-function calls)."""
    n = model.n_features
    if n > BRUTE_FORCE_MAX_FEATURES:
        raise CapacityError(f"brute force is limited to {BRUTE_FORCE_MAX_FEATURES} features, model has {n}")
    values = coalition_values(model, x)
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = np.array([bin(m).count("1") for m in range(1 << n)])
    weight_by_size = np.array([factorial(s) * factorial(n - s - 1) / factorial(n) if s < n else 0.0 for s in range(n + 1)])
    phi = np.zeros(n)
    for j in range(n):
        without = masks[(masks >> j) & 1 == 0]
        phi[j] = np.sum(weight_by_size[sizes[without]] * (values[without | (1 << j)] - values[without]))
    return phi


def expected_value(model: TreeEnsemble) -> float:
    """Empty-coalition value: the cover-weighted mean margin, independent of x."""
    return tree_value_function(model, np.zeros(model.n_features), ())


def _shap_rows(model, X, backend=None, threads=None) -> np.ndarray:
    kernels = _backend.kernels if backend is None else _backend.get(backend)
    p = model.packed()
    X = np.ascontiguousarray(X, dtype=np.float64)
    phi = np.zeros((X.shape[0], model.n_features))
    threads = threads or default_threads()

    def run(lo, hi):
        kernels.tree_shap(p.feature, p.threshold, p.left, p.right, p.value, p.cover,
                          p.roots, p.max_depth, X, phi, lo, hi)

    n = X.shape[0]
    if threads <= 1 or n < 2 * threads:
        run(0, n)
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(run, bounds[:-1], bounds[1:]))
    return phi


def shap_fast(model: TreeEnsemble, x, backend=None) -> np.ndarray:
    x = _as_vector(model, x)
    return _shap_rows(model, x.reshape(1, -1), backend=backend, threads=1)[0]


@dataclass(frozen=True, eq=False)
class ShapMatrix:
    values: np.ndarray
    base_value: float
    sample_index_map: np.ndarray
    feature_names: tuple[str, ...]

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def column(self, name_or_index) -> np.ndarray:
        j = name_or_index if isinstance(name_or_index, (int, np.integer)) else self.feature_names.index(name_or_index)
        return self.values[:, j]

    def reconstructed_margin(self) -> np.ndarray:
        return self.base_value + self.values.sum(axis=1)


def shap_matrix(model: TreeEnsemble, data: LabeledDataset, backend=None, threads=None) -> ShapMatrix:
    """Attributions for every row of ``data``; labels are never read."""
    if data.n_features != model.n_features or (
        model.feature_names is not None and tuple(model.feature_names) != data.schema.names
    ):
        raise SchemaMismatchError(
            f"dataset features {list(data.schema.names)} do not match model features {model.feature_names}"
        )
    values = _shap_rows(model, data.x, backend=backend, threads=threads)
    values.setflags(write=False)
    return ShapMatrix(values, expected_value(model), data.row_ids.copy(), data.schema.names)


@dataclass(frozen=True)
class FeatureImportance:
    mean_abs: np.ndarray
    ranking: np.ndarray
    feature_names: tuple[str, ...]

    def table(self) -> list[tuple[str, float]]:
        return [(self.feature_names[j], float(self.mean_abs[j])) for j in self.ranking]


def mean_abs_importance(s: ShapMatrix) -> FeatureImportance:
    if s.n_samples < 1:
        raise ValueError("importance needs at least one attribution row")
    mean_abs = np.abs(s.values).mean(axis=0)
    # stable sort on the negated values keeps lower indices first among ties
    ranking = np.argsort(-mean_abs, kind="stable")
    return FeatureImportance(mean_abs, ranking, s.feature_names)


@dataclass(frozen=True)
class Waterfall:
    row: int
    base_value: float
    margin: float
    bars: list  # (feature name, feature value, attribution), largest |attribution| first

    def to_dict(self) -> dict:
        return {
            "row": self.row,
            "base_value": self.base_value,
            "margin": self.margin,
            "bars": [{"feature": n, "value": v, "shap": a} for n, v, a in self.bars],
        }


def waterfall_data(s: ShapMatrix, data: LabeledDataset, row: int) -> Waterfall:
    if not 0 <= row < s.n_samples:
        raise IndexError(f"row {row} outside 0..{s.n_samples - 1}")
    phi = s.values[row]
    order = np.argsort(-np.abs(phi), kind="stable")
    bars = [(s.feature_names[j], float(data.x[row, j]), float(phi[j])) for j in order]
    margin = s.base_value + float(np.sum(phi))
    return Waterfall(row, s.base_value, margin, bars)


# ---- export -----------------------------------------------------------


def write_shap_csv(s: ShapMatrix, path) -> None:
    """Attribution matrix in the dataset CSV dialect, preceded by a ``# base_value=`` line."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# base_value={s.base_value!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", *s.feature_names])
        for rid, vals in zip(s.sample_index_map.tolist(), s.values.tolist()):
            w.writerow([rid, *(repr(v) for v in vals)])


def read_shap_csv(path) -> ShapMatrix:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("# base_value="):
            raise ValueError(f"{path}: missing base_value metadata line")
        base = float(first.split("=", 1)[1])
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    names = tuple(header[1:])
    ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
    vals = np.array([[float(c) for c in r[1:]] for r in rows], dtype=np.float64).reshape(len(rows), len(names))
    return ShapMatrix(vals, base, ids, names)


def write_summary_csv(s: ShapMatrix, data: LabeledDataset, path) -> None:
    """Long-format (feature, rank, value, shap) table for a beeswarm-style summary plot."""
    imp = mean_abs_importance(s)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "rank", "row", "feature_value", "shap"])
        for rank, j in enumerate(imp.ranking.tolist()):
            name = s.feature_names[j]
            for rid, v, a in zip(s.sample_index_map.tolist(), data.x[:, j].tolist(), s.values[:, j].tolist()):
                w.writerow([name, rank, rid, repr(v), repr(a)])


def write_importance_json(imp: FeatureImportance, path) -> None:
    doc = [{"feature": n, "mean_abs_shap": v} for n, v in imp.table()]
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
