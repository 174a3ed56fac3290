import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from advexplain import synth
from advexplain.dataset import DEFAULT_FEATURES, FeatureSchema, LabeledDataset
from advexplain.errors import SchemaMismatchError, SearchDomainEmptyError
from advexplain.explain import FeatureImportance, ShapMatrix
from advexplain.attack import (
    AttackPlan,
    Perturbation,
    find_epsilon,
    generate_adversarial,
    margin_shift,
    resolve_features,
    run_attack,
    select_feature,
    select_features,
)
from advexplain.gbt import TrainConfig, train

# Mean |SHAP| per feature as published, in schema order.
PUBLISHED_MEAN_ABS = np.array([3.433418, 2.018903, 1.633189, 1.386476, 1.047884, 0.429822, 0.283653])


def _importance(mean_abs, names=DEFAULT_FEATURES):
    mean_abs = np.asarray(mean_abs, dtype=float)
    return FeatureImportance(mean_abs, np.argsort(-mean_abs, kind="stable"), tuple(names))


def _plan(f=0, eps=191.0, names=DEFAULT_FEATURES):
    return AttackPlan((Perturbation(f, names[f], 0, -6.79, eps),))


def test_published_ranking_selects_frame_len():
    imp = _importance(PUBLISHED_MEAN_ABS)
    assert DEFAULT_FEATURES[select_feature(imp)] == "frame.len"


def test_excluding_frame_len_falls_back_to_udp_dstport():
    imp = _importance(PUBLISHED_MEAN_ABS)
    excluded = resolve_features(["frame.len"], DEFAULT_FEATURES)
    assert DEFAULT_FEATURES[select_feature(imp, excluded)] == "udp.dstport"
    assert [DEFAULT_FEATURES[j] for j in select_features(imp, excluded, 2)] == ["udp.dstport", "ip.flags"]


def test_tie_goes_to_lower_index():
    assert select_feature(_importance([2.0, 2.0], ("a", "b"))) == 0


def test_all_excluded_is_an_error():
    with pytest.raises(ValueError):
        select_feature(_importance([1.0, 2.0], ("a", "b")), frozenset({0, 1}))


def test_unknown_excluded_name():
    with pytest.raises(KeyError):
        resolve_features(["no.such"], DEFAULT_FEATURES)


def test_benign_filter_ignores_smaller_malicious_value():
    d = make_dataset([[10.0], [20.0]], [0, 1])
    s = ShapMatrix(np.array([[-1.0], [-9.0]]), 0.0, np.arange(2), ("f0",))
    assert find_epsilon(s, d, 0) == (0, -1.0, 10.0)


def test_no_benign_rows():
    d = make_dataset([[10.0], [20.0]], [1, 1])
    s = ShapMatrix(np.array([[-1.0], [-9.0]]), 0.0, np.arange(2), ("f0",))
    with pytest.raises(SearchDomainEmptyError):
        find_epsilon(s, d, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_find_epsilon_linear_scan(n, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    y[rng.integers(n)] = 0
    # coarse values so ties actually happen
    vals = rng.integers(-3, 3, size=(n, 3)).astype(float)
    x = rng.integers(0, 100, size=(n, 3)).astype(float)
    d = make_dataset(x, y)
    s = ShapMatrix(vals, 0.0, np.arange(n), d.schema.names)
    for f in range(3):
        best_row, best = None, float("inf")
        for i in range(n):
            if y[i] == 0 and vals[i, f] < best:
                best_row, best = i, vals[i, f]
        assert find_epsilon(s, d, f) == (best_row, best, x[best_row, f])


def test_single_cell_rewrite():
    mal = LabeledDataset(FeatureSchema(), [[60, 0, 2, 80, 64, 0, 40]], [1])
    adv = generate_adversarial(mal, _plan())
    assert adv.samples.x.tolist() == [[191, 0, 2, 80, 64, 0, 40]]
    assert adv.samples.y.tolist() == [1]


def test_empty_malicious_set():
    mal = LabeledDataset(FeatureSchema(), np.empty((0, 7)), [])
    assert len(generate_adversarial(mal, _plan())) == 0


def test_plan_schema_mismatch():
    mal = make_dataset([[1.0, 2.0]], [1], ["a", "b"])
    with pytest.raises(SchemaMismatchError):
        generate_adversarial(mal, _plan())


def test_diff_property_on_1000_rows():
    rng = np.random.default_rng(4)
    x = rng.integers(185, 195, size=(1000, 7)).astype(float)
    mal = LabeledDataset(FeatureSchema(), x, np.ones(1000))
    adv = generate_adversarial(mal, _plan(eps=191.0))
    diff = (adv.samples.x != mal.x).sum(axis=1)
    assert set(diff.tolist()) <= {0, 1}
    assert np.array_equal(diff == 0, mal.x[:, 0] == 191.0)
    assert np.array_equal(adv.origin_map, mal.row_ids)


def test_plan_serialization_round_trip(tmp_path):
    plan = AttackPlan((Perturbation(0, "frame.len", 12, -6.79, 191.0),), frozenset({3}), ("tcp.dstport",))
    (tmp_path / "p.json").write_text(plan.dumps())
    assert AttackPlan.load(tmp_path / "p.json") == plan


def test_plan_rejects_excluded_selection():
    with pytest.raises(ValueError):
        AttackPlan((Perturbation(0, "frame.len", 0, -1.0, 1.0),), frozenset({0}))


@pytest.fixture(scope="module")
def attacked(small_model, small_synth):
    return run_attack(small_model, small_synth)


def test_run_attack_plan_invariants(attacked, small_synth):
    plan = attacked.plan
    assert plan.feature_name == "frame.len"  # the planted dominant feature
    assert small_synth.y[plan.source_row] == 0
    assert plan.source_shap == attacked.shap.values[plan.source_row, plan.feature_index]
    assert plan.epsilon == small_synth.x[plan.source_row, plan.feature_index]
    assert len(attacked.adversarial) == small_synth.class_counts()[1]
    assert np.all(attacked.adversarial.samples.y == 1)


def test_run_attack_is_deterministic(attacked, small_model, small_synth):
    again = run_attack(small_model, small_synth)
    assert again.plan.dumps() == attacked.plan.dumps()
    assert again.adversarial.samples.x.tobytes() == attacked.adversarial.samples.x.tobytes()


def test_margin_shift_statistic(attacked, small_model):
    stats = margin_shift(small_model, attacked.malicious, attacked.adversarial)
    assert stats["n"] == len(attacked.adversarial)
    assert stats["mean_delta"] < 0


def test_exclusion_and_top_k(small_model, small_synth):
    r = run_attack(small_model, small_synth, excluded=["frame.len"], k=2)
    assert 0 not in [p.feature_index for p in r.plan.perturbations]
    assert len(r.plan.perturbations) == 2
    diff = (r.adversarial.samples.x != r.malicious.x).sum(axis=1)
    assert diff.max() <= 2
    with pytest.raises(ValueError):
        run_attack(small_model, small_synth, excluded=list(DEFAULT_FEATURES))


def test_search_rows_restrict_source(small_model, small_synth):
    rows = np.arange(0, 500)
    r = run_attack(small_model, small_synth, search_rows=rows)
    assert r.plan.source_row < 500


@pytest.mark.parametrize("planted", ["ip.ttl", "tcp.dstport"])
def test_planted_feature_is_selected(planted):
    d = synth.generate(synth.SynthConfig(n_samples=3000, dominant_feature=planted, seed=11))
    m = train(d, TrainConfig(n_rounds=10, max_depth=3))
    assert run_attack(m, d).plan.feature_name == planted


def test_single_class_data_rejected(small_model):
    d = LabeledDataset(FeatureSchema(), np.zeros((3, 7)), [1, 1, 1])
    with pytest.raises(SearchDomainEmptyError):
        run_attack(small_model, d)
