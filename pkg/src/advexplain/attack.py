"""Shapley-guided single-feature evasion attack.

1. Attribute every sample's margin to its features.
2. Pick the feature with the largest mean |attribution| (skipping features
   the attacker cannot manipulate).
3. Among benign samples, find the one where that feature pushed hardest
   toward benign (the most negative attribution) and read its value there.
4. Overwrite that feature with the value in every malicious sample.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import LabeledDataset, partition_by_label
from .errors import SchemaMismatchError, SearchDomainEmptyError
from .explain import FeatureImportance, ShapMatrix, mean_abs_importance, shap_matrix
from .gbt import TreeEnsemble


@dataclass(frozen=True)
class Perturbation:
    feature_index: int
    feature_name: str
    source_row: int  # position in the explained dataset
    source_shap: float
    epsilon: float


@dataclass(frozen=True)
class AttackPlan:
    """Chosen perturbation(s); the first entry is the primary feature."""

    perturbations: tuple[Perturbation, ...]
    excluded_features: frozenset = frozenset()
    excluded_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.perturbations:
            raise ValueError("an attack plan needs at least one perturbation")
        for p in self.perturbations:
            if p.feature_index in self.excluded_features:
                raise ValueError(f"feature {p.feature_name} is excluded but selected")

    @property
    def primary(self) -> Perturbation:
        return self.perturbations[0]

    @property
    def feature_index(self) -> int:
        return self.primary.feature_index

    @property
    def feature_name(self) -> str:
        return self.primary.feature_name

    @property
    def source_row(self) -> int:
        return self.primary.source_row

    @property
    def source_shap(self) -> float:
        return self.primary.source_shap

    @property
    def epsilon(self) -> float:
        return self.primary.epsilon

    def to_dict(self) -> dict:
        return {
            "feature_index": self.feature_index,
            "feature_name": self.feature_name,
            "source_row": self.source_row,
            "source_shap": self.source_shap,
            "epsilon": self.epsilon,
            "excluded_features": sorted(self.excluded_features),
            "excluded_names": list(self.excluded_names),
            "perturbations": [asdict(p) for p in self.perturbations],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc) -> "AttackPlan":
        perts = tuple(Perturbation(**p) for p in doc["perturbations"])
        return cls(perts, frozenset(doc.get("excluded_features", ())), tuple(doc.get("excluded_names", ())))

    @classmethod
    def load(cls, path) -> "AttackPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True, eq=False)
class AdversarialSet:
    samples: LabeledDataset
    plan: AttackPlan
    origin_map: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return len(self.samples)


def resolve_features(names_or_indices, feature_names) -> frozenset:
    """Feature names or indices -> index set."""
    out = set()
    for item in names_or_indices or ():
        if isinstance(item, (int, np.integer)):
            if not 0 <= item < len(feature_names):
                raise KeyError(f"feature index {item} out of range")
            out.add(int(item))
        else:
            try:
                out.add(feature_names.index(item))
            except ValueError:
                raise KeyError(f"unknown feature {item!r}; known: {list(feature_names)}") from None
    return frozenset(out)


def select_features(importance: FeatureImportance, excluded=frozenset(), k: int = 1) -> list[int]:
    """Top-k features by mean |attribution| that are not excluded."""
    chosen = [int(j) for j in importance.ranking if int(j) not in excluded][:k]
    if not chosen:
        raise ValueError("every feature is excluded; nothing to perturb")
    return chosen


def select_feature(importance: FeatureImportance, excluded=frozenset()) -> int:
    return select_features(importance, excluded, 1)[0]


def find_epsilon(s: ShapMatrix, data: LabeledDataset, feature: int, rows=None) -> tuple[int, float, float]:
    """(row, attribution, value) of the benign sample with the lowest attribution for ``feature``.

    ``rows`` optionally restricts the search to those positions. Ties go to
    the lowest row.
    """
    if s.n_samples != len(data):
        raise ValueError(f"attribution matrix has {s.n_samples} rows, dataset has {len(data)}")
    candidates = np.flatnonzero(data.y == 0)
    if rows is not None:
        candidates = np.intersect1d(candidates, np.asarray(rows, dtype=np.int64))
    if candidates.size == 0:
        raise SearchDomainEmptyError("no benign sample to take a perturbation value from")
    col = s.values[candidates, feature]
    k = int(np.argmin(col))
    lam = int(candidates[k])
    return lam, float(col[k]), float(data.x[lam, feature])


def generate_adversarial(malicious: LabeledDataset, plan: AttackPlan) -> AdversarialSet:
    names = malicious.schema.names
    for p in plan.perturbations:
        if p.feature_index >= malicious.n_features or names[p.feature_index] != p.feature_name:
            raise SchemaMismatchError(f"plan feature {p.feature_name!r} is not column {p.feature_index} of the data")
    x = malicious.x.copy()
    for p in plan.perturbations:
        x[:, p.feature_index] = p.epsilon
    y = np.ones(len(malicious), dtype=np.int8)
    samples = LabeledDataset(malicious.schema, x, y, malicious.row_ids)
    return AdversarialSet(samples, plan, malicious.row_ids.copy())


@dataclass(frozen=True, eq=False)
class AttackResult:
    plan: AttackPlan
    adversarial: AdversarialSet
    shap: ShapMatrix
    importance: FeatureImportance
    malicious: LabeledDataset


def run_attack(model: TreeEnsemble, data: LabeledDataset, excluded=(), k: int = 1,
               search_rows=None, threads=None) -> AttackResult:
    """Full attack on ``data``: explain, pick feature(s), find values, rewrite malicious rows.

    Labels are read only to separate benign from malicious rows, never for
    the attributions themselves.
    """
    names = data.schema.names
    excluded_idx = resolve_features(excluded, names)
    if len(excluded_idx) >= len(names):
        raise ValueError("every feature is excluded; nothing to perturb")
    n_benign, n_mal = data.class_counts()
    if n_benign == 0 or n_mal == 0:
        raise SearchDomainEmptyError("the attack needs both benign and malicious samples")
    s = shap_matrix(model, data, threads=threads)
    importance = mean_abs_importance(s)
    perts = []
    for f in select_features(importance, excluded_idx, k):
        lam, sigma, eps = find_epsilon(s, data, f, rows=search_rows)
        perts.append(Perturbation(f, names[f], lam, sigma, eps))
    plan = AttackPlan(tuple(perts), excluded_idx, tuple(names[j] for j in sorted(excluded_idx)))
    _, malicious = partition_by_label(data)
    return AttackResult(plan, generate_adversarial(malicious, plan), s, importance, malicious)


def margin_shift(model: TreeEnsemble, original: LabeledDataset, adversarial: AdversarialSet) -> dict:
    """How the perturbation moved each sample's margin; rows whose margin rose are counted."""
    if len(original) != len(adversarial):
        raise ValueError("original and adversarial sets differ in length")
    if len(original) == 0:
        return {"n": 0, "n_increased": 0, "mean_delta": 0.0, "max_delta": 0.0}
    delta = model.predict_margin(adversarial.samples.x) - model.predict_margin(original.x)
    return {
        "n": int(delta.size),
        "n_increased": int(np.count_nonzero(delta > 0)),
        "mean_delta": float(delta.mean()),
        "max_delta": float(delta.max()),
    }
