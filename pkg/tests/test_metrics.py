import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from published_tables import (
    BASELINE_COUNTS,
    BASELINE_TABLE,
    POST_ATTACK_COUNTS,
    POST_ATTACK_TABLE,
    TOLERANCE,
    cell_errors,
    report_cells,
)
from advexplain.gbt import Tree, TreeEnsemble
from advexplain.dataset import FeatureSchema, LabeledDataset
from advexplain.metrics import ConfusionMatrix, compute_report, confusion, evasion_rate


def test_confusion_examples():
    assert confusion([1, 0], [1, 0]) == ConfusionMatrix(tp=1, tn=1, fp=0, fn=0)
    assert confusion([1, 1, 0, 0], [1, 0, 1, 0]) == ConfusionMatrix(tp=1, tn=1, fp=1, fn=1)


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion([1, 0], [1])
    with pytest.raises(ValueError):
        confusion([2, 0], [1, 0])


def test_balanced_half_right():
    r = compute_report(ConfusionMatrix(tp=1, tn=1, fp=1, fn=1))
    assert r.accuracy == 0.5
    assert r.per_class[0].precision == r.per_class[1].precision == 0.5
    assert r.per_class[0].f1 == r.per_class[1].f1 == 0.5


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        compute_report(ConfusionMatrix(0, 0, 0, 0))


def test_supports_must_agree():
    cm = ConfusionMatrix(tp=3, tn=4, fp=1, fn=2)
    assert compute_report(cm, (5, 5)).per_class[0].support == 5
    with pytest.raises(ValueError):
        compute_report(cm, (6, 4))


def test_zero_denominator_is_flagged():
    r = compute_report(POST_ATTACK_COUNTS)
    c1 = r.per_class[1]
    assert (c1.precision, c1.recall, c1.f1) == (0.0, 0.0, 0.0)
    assert c1.degenerate
    assert not r.per_class[0].degenerate


@pytest.mark.parametrize(
    "counts,table",
    [(BASELINE_COUNTS, BASELINE_TABLE), (POST_ATTACK_COUNTS, POST_ATTACK_TABLE)],
    ids=["before-attack", "after-attack"],
)
def test_published_tables_reproduced(counts, table):
    errors = cell_errors(compute_report(counts), table)
    worst = max(errors, key=errors.get)
    assert errors[worst] <= TOLERANCE, worst


@pytest.mark.parametrize(
    "counts,table",
    [(BASELINE_COUNTS, BASELINE_TABLE), (POST_ATTACK_COUNTS, POST_ATTACK_TABLE)],
    ids=["before-attack", "after-attack"],
)
def test_published_cells_round_exactly(counts, table):
    got = report_cells(compute_report(counts))
    for key, want in table.items():
        values = got[key] if isinstance(want, tuple) else (got[key],)
        assert [round(v, 4) for v in values] == list(want if isinstance(want, tuple) else (want,)), key


def test_baseline_false_positive_rate():
    assert round(compute_report(BASELINE_COUNTS).fp_rate * 100, 2) == 0.21


_counts = st.tuples(*[st.integers(0, 10_000)] * 4).filter(lambda c: sum(c) > 0)


@settings(max_examples=200, deadline=None)
@given(_counts)
def test_formula_consistency(c):
    cm = ConfusionMatrix(*c)
    r = compute_report(cm)
    assert r.accuracy * cm.n == pytest.approx(cm.tp + cm.tn, abs=1e-9)
    for m in r.per_class:
        if m.precision + m.recall > 0:
            assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall), abs=1e-12)
        for v in (m.precision, m.recall, m.f1):
            assert 0.0 <= v <= 1.0
    assert r.macro_avg.f1 == pytest.approx((r.per_class[0].f1 + r.per_class[1].f1) / 2, abs=1e-12)
    n0, n1 = cm.supports
    assert r.weighted_avg.recall == pytest.approx((n0 * r.per_class[0].recall + n1 * r.per_class[1].recall) / cm.n, abs=1e-12)
    assert 0.0 <= r.fp_rate <= 1.0 and 0.0 <= r.fn_rate <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=200))
def test_confusion_counts_sum_to_n(pairs):
    p, t = zip(*pairs)
    assert confusion(p, t).n == len(pairs)


def _threshold_model():
    # margin = +1 if x >= 0.5 else -1
    t = Tree([0, -1, -1], [0.5, 0, 0], [1, -1, -1], [2, -1, -1], [0, -1.0, 1.0], [2.0, 1.0, 1.0])
    return TreeEnsemble([t], 0.0, 1.0, 1)


def _adv(values):
    return LabeledDataset(FeatureSchema(("v",)), np.reshape(values, (-1, 1)), np.ones(len(values)))


def test_evasion_rate_cases():
    m = _threshold_model()
    assert evasion_rate(m, _adv([0.0, 0.1, 0.2])) == 1.0
    assert evasion_rate(m, _adv([0.0, 1.0, 0.2, 0.9])) == 0.5
    with pytest.raises(ValueError):
        evasion_rate(m, _adv([]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_evasion_plus_detection_is_one(values):
    m = _threshold_model()
    adv = _adv(values)
    detected = compute_report(confusion(m.predict_class(adv.x), adv.y)).per_class[1].recall
    assert evasion_rate(m, adv) + detected == 1.0


def test_report_exports():
    r = compute_report(BASELINE_COUNTS, evasion_rate=0.25)
    doc = json.loads(r.dumps())
    assert doc["confusion"] == {"tp": 56895, "tn": 172560, "fp": 357, "fn": 168}
    assert set(doc["per_class"]) == {"0", "1"}
    text = r.table("before")
    assert "Macro average" in text and "Weighted average" in text
    assert "0.9977" in text


def _cells_by_hand(tn, fp, fn, tp):
    p0, r0 = tn / (tn + fn), tn / (tn + fp)
    p1, r1 = tp / (tp + fp), tp / (tp + fn)
    f0, f1 = 2 * p0 * r0 / (p0 + r0), 2 * p1 * r1 / (p1 + r1)
    n0, n1, n = tn + fp, tp + fn, tn + fp + fn + tp
    w = lambda a, b: (n0 * a + n1 * b) / n
    return [p0, r0, f0, p1, r1, f1, (p0 + p1) / 2, (r0 + r1) / 2, (f0 + f1) / 2,
            w(p0, p1), w(r0, r1), w(f0, f1), (tp + tn) / n]


def test_baseline_counts_are_the_unique_rounding_solution():
    t = BASELINE_TABLE
    want = [*t["class0"], *t["class1"], *t["macro"], *t["weighted"], t["accuracy"]]
    n0, n1 = BASELINE_COUNTS.supports
    hits = [
        (fp, fn)
        for fp in range(250, 500)
        for fn in range(80, 260)
        if [round(v, 4) for v in _cells_by_hand(n0 - fp, fp, fn, n1 - fn)] == want
    ]
    assert hits == [(BASELINE_COUNTS.fp, BASELINE_COUNTS.fn)]
