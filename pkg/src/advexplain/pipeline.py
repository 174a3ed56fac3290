"""Declarative end-to-end runs: data -> split -> train -> explain/attack -> evaluate.

A run config is JSON. Every artifact lands in one run directory together with
``manifest.json`` (config echo, seeds, versions, SHA-256 of each artifact).
Nothing time-dependent is written, so reruns are byte-identical.
"""

from __future__ import annotations

import copy
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .attack import AttackResult, margin_shift, run_attack
from .dataset import FeatureSchema, LabeledDataset, concat, emit_csv, load_csv, stratified_split
from .errors import ConfigError
from .explain import write_importance_json, write_shap_csv, write_summary_csv, waterfall_data
from .gbt import TrainConfig, train
from .metrics import compute_report, confusion, evaluate, evasion_rate
from .pcap import pcap_to_dataset
from .synth import SynthConfig, generate

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {"source": "synth", "synth": {}},
    "split": {"test_fraction": 0.25},
    "train": {},
    "attack": {"exclude": [], "top_k": 1, "epsilon_scope": "full"},
    "evaluate": {"min_evasion": None, "min_accuracy": None},
}

_SECTIONS = {
    "seed": int,
    "data": dict,
    "split": dict,
    "train": dict,
    "attack": dict,
    "evaluate": dict,
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if isinstance(out.get(key), dict) and not isinstance(val, dict):
            raise ConfigError(f"{where}: expected an object")
        if isinstance(out.get(key), dict) and isinstance(val, dict) and key != "synth":
            out[key] = _merge(out[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _fields(section: dict, allowed: set, path: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown field (allowed: {sorted(allowed)})")


def _build(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def normalize_config(raw) -> dict:
    """Merge ``raw`` over the defaults and validate; errors name the offending field path."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a JSON object")
    unknown = sorted(set(raw) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown top-level field (allowed: {sorted(_SECTIONS)})")
    cfg = _merge(DEFAULT_CONFIG, raw)
    for key, typ in _SECTIONS.items():
        if not isinstance(cfg[key], typ) or (typ is int and isinstance(cfg[key], bool)):
            raise ConfigError(f"{key}: expected {typ.__name__}")

    data = cfg["data"]
    source = data.get("source")
    if source == "synth":
        _fields(data, {"source", "synth"}, "data")
        syn = dict(data.get("synth") or {})
        if not isinstance(data.get("synth", {}), dict):
            raise ConfigError("data.synth: expected an object")
        allowed = {"n_samples", "malicious_fraction", "dominant_feature", "signal_strength", "tcp_fraction", "seed"}
        _fields(syn, allowed, "data.synth")
        syn.setdefault("seed", cfg["seed"])
        _build(SynthConfig, syn, "data.synth")
        data["synth"] = syn
    elif source == "csv":
        _fields(data, {"source", "path"}, "data")
        if not isinstance(data.get("path"), str):
            raise ConfigError("data.path: expected a file path")
    elif source == "pcap":
        _fields(data, {"source", "benign", "malicious"}, "data")
        for side in ("benign", "malicious"):
            if not isinstance(data.get(side), list) or not all(isinstance(p, str) for p in data[side]):
                raise ConfigError(f"data.{side}: expected a list of pcap paths")
    else:
        raise ConfigError(f"data.source: expected 'synth', 'csv' or 'pcap', got {source!r}")

    split = cfg["split"]
    _fields(split, {"test_fraction"}, "split")
    tf = split["test_fraction"]
    if not isinstance(tf, (int, float)) or not 0 < tf < 1:
        raise ConfigError("split.test_fraction: expected a number in (0, 1)")

    tr = cfg["train"]
    _fields(tr, {"n_rounds", "max_depth", "learning_rate", "min_child_cover", "l2_leaf_penalty"}, "train")
    _build(TrainConfig, {**tr, "seed": cfg["seed"]}, "train")

    at = cfg["attack"]
    _fields(at, {"exclude", "top_k", "epsilon_scope"}, "attack")
    if not isinstance(at["exclude"], list) or not all(isinstance(e, str) for e in at["exclude"]):
        raise ConfigError("attack.exclude: expected a list of feature names")
    if not isinstance(at["top_k"], int) or at["top_k"] < 1:
        raise ConfigError("attack.top_k: expected an integer >= 1")
    if at["epsilon_scope"] not in ("full", "train", "test"):
        raise ConfigError("attack.epsilon_scope: expected 'full', 'train' or 'test'")

    ev = cfg["evaluate"]
    _fields(ev, {"min_evasion", "min_accuracy"}, "evaluate")
    for k in ("min_evasion", "min_accuracy"):
        if ev[k] is not None and not (isinstance(ev[k], (int, float)) and 0 <= ev[k] <= 1):
            raise ConfigError(f"evaluate.{k}: expected null or a number in [0, 1]")
    return cfg


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<root>: invalid JSON ({exc})") from None
    return normalize_config(raw)


def load_data(cfg: dict) -> tuple[LabeledDataset, dict]:
    data = cfg["data"]
    if data["source"] == "synth":
        return generate(SynthConfig(**data["synth"])), {}
    if data["source"] == "csv":
        return load_csv(data["path"], FeatureSchema()), {}
    parts, stats = [], {}
    for label, side in ((0, "benign"), (1, "malicious")):
        ds, st = pcap_to_dataset(data[side], label)
        parts.append(ds)
        stats[side] = {"packets": st.packets, "rows": st.rows, "skips": dict(sorted(st.skips.items()))}
    return concat(parts), stats


def scope_rows(scope: str, split):
    if scope == "full":
        return None
    part = split.train if scope == "train" else split.test
    return part.row_ids


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    return {
        "advexplain": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel_backend": _backend.BACKEND,
    }


def write_attack_artifacts(result: AttackResult, data: LabeledDataset, out: Path) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(result.plan.dumps(), encoding="utf-8")
    emit_csv(result.adversarial.samples, out / "adversarial.csv")
    write_shap_csv(result.shap, out / "shap_values.csv")
    write_summary_csv(result.shap, data, out / "shap_summary.csv")
    wf = waterfall_data(result.shap, data, result.plan.source_row)
    (out / "waterfall.json").write_text(json.dumps(wf.to_dict(), indent=1) + "\n", encoding="utf-8")
    write_importance_json(result.importance, out / "importance.json")
    lines = [f"{'Feature':<14} Average |SHAP|"] + [f"{n:<14} {v:.6f}" for n, v in result.importance.table()]
    (out / "importance.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return ["plan.json", "adversarial.csv", "shap_values.csv", "shap_summary.csv",
            "waterfall.json", "importance.json", "importance.txt"]


def run_pipeline(cfg: dict, out_dir, threads=None) -> dict:
    """Run every stage; returns the summary also written to ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]
    artifacts = []

    data, extraction = load_data(cfg)
    emit_csv(data, out / "dataset.csv")
    artifacts.append("dataset.csv")
    split = stratified_split(data, cfg["split"]["test_fraction"], seed)
    emit_csv(split.train, out / "train.csv")
    emit_csv(split.test, out / "test.csv")
    artifacts += ["train.csv", "test.csv"]

    model = train(split.train, TrainConfig(**cfg["train"], seed=seed))
    model.save(out / "model.json")
    artifacts.append("model.json")
    baseline = evaluate(model, split.test)
    (out / "baseline_report.txt").write_text(baseline.table("Testing results before the attack"), encoding="utf-8")
    (out / "baseline_report.json").write_text(baseline.dumps(), encoding="utf-8")
    artifacts += ["baseline_report.txt", "baseline_report.json"]

    at = cfg["attack"]
    result = run_attack(model, data, excluded=at["exclude"], k=at["top_k"],
                        search_rows=scope_rows(at["epsilon_scope"], split), threads=threads)
    artifacts += ["attack/" + a for a in write_attack_artifacts(result, data, out / "attack")]

    # Test set with its malicious rows swapped for their adversarial versions.
    adv = result.adversarial
    in_test = np.isin(adv.origin_map, split.test.row_ids)
    adv_test_x = adv.samples.x[in_test]
    test_benign = split.test.y == 0
    post_x = np.concatenate([split.test.x[test_benign], adv_test_x])
    post_y = np.concatenate([np.zeros(int(test_benign.sum()), dtype=np.int8), np.ones(len(adv_test_x), dtype=np.int8)])
    post_pred = model.predict_class(post_x)
    adv_all_rate = evasion_rate(model, adv)
    adv_test_rate = float(np.mean(model.predict_class(adv_test_x) == 0)) if len(adv_test_x) else None
    post = compute_report(confusion(post_pred, post_y), evasion_rate=adv_test_rate)
    (out / "attack_report.txt").write_text(post.table("Testing results after the attack"), encoding="utf-8")
    (out / "attack_report.json").write_text(post.dumps(), encoding="utf-8")
    artifacts += ["attack_report.txt", "attack_report.json"]

    malicious_recall = float(np.mean(model.predict_class(result.malicious.x) == 1))
    summary = {
        "n_samples": len(data),
        "class_counts": list(data.class_counts()),
        "extraction": extraction,
        "baseline_accuracy": baseline.accuracy,
        "baseline_macro_f1": baseline.macro_avg.f1,
        "selected_feature": result.plan.feature_name,
        "source_row": result.plan.source_row,
        "source_shap": result.plan.source_shap,
        "epsilon": result.plan.epsilon,
        "top_importance": result.importance.table()[0][1],
        "n_adversarial": len(adv),
        "evasion_rate": adv_all_rate,
        "evasion_rate_test": adv_test_rate,
        "recall_original_malicious": malicious_recall,
        "recall_adversarial": 1.0 - adv_all_rate,
        "post_attack_accuracy": post.accuracy,
        "margin_shift": margin_shift(model, result.malicious, adv),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    artifacts.append("summary.json")

    manifest = {
        "config": cfg,
        "seeds": {"run": seed, "split": split.seed, "train": seed,
                  "synth": cfg["data"].get("synth", {}).get("seed")},
        "versions": versions(),
        "artifacts": {name: sha256_file(out / name) for name in artifacts},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def check_floors(cfg: dict, summary: dict) -> list[str]:
    """Configured acceptance floors that the run missed."""
    failures = []
    ev = cfg["evaluate"]
    if ev["min_evasion"] is not None and summary["evasion_rate"] < ev["min_evasion"]:
        failures.append(f"evasion rate {summary['evasion_rate']:.4f} < floor {ev['min_evasion']}")
    if ev["min_accuracy"] is not None and summary["baseline_accuracy"] < ev["min_accuracy"]:
        failures.append(f"baseline accuracy {summary['baseline_accuracy']:.4f} < floor {ev['min_accuracy']}")
    return failures
