"""Command line entry point: ``advexplain {extract,synth,train,attack,evaluate,pipeline}``.

Exit codes: 0 success, 1 a configured acceptance floor was missed, 2 bad
usage or unreadable/invalid input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attack import run_attack
from .dataset import FeatureSchema, LabeledDataset, emit_csv, load_csv, stratified_split
from .errors import AdvexplainError
from .gbt import TrainConfig, TreeEnsemble, train
from .metrics import compute_report, confusion, evaluate, evasion_rate
from .pcap import pcap_to_dataset
from .pipeline import check_floors, load_config, run_pipeline, scope_rows, write_attack_artifacts
from .synth import SynthConfig, generate

EXIT_OK, EXIT_FLOOR, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _load_model(path) -> TreeEnsemble:
    if not Path(path).is_file():
        raise InputError(f"model file {path} does not exist")
    return TreeEnsemble.load(path)


def _load_dataset(path) -> LabeledDataset:
    if not Path(path).is_file():
        raise InputError(f"dataset {path} does not exist")
    return load_csv(path, FeatureSchema())


def cmd_extract(args) -> int:
    data, stats = pcap_to_dataset(args.pcaps, args.label)
    emit_csv(data, args.out)
    skips = ", ".join(f"{k}={v}" for k, v in sorted(stats.skips.items())) or "none"
    print(f"packets={stats.packets} rows={stats.rows} skipped={stats.skipped} ({skips})")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_samples=args.n_samples,
        malicious_fraction=args.malicious_fraction,
        dominant_feature=args.dominant_feature,
        signal_strength=args.signal_strength,
        seed=args.seed,
    )
    data = generate(cfg)
    emit_csv(data, args.out)
    n0, n1 = data.class_counts()
    print(f"wrote {args.out}: {len(data)} rows ({n0} benign, {n1} malicious)")
    return EXIT_OK


def cmd_train(args) -> int:
    data = _load_dataset(args.data)
    split = stratified_split(data, args.test_fraction, args.seed)
    config = TrainConfig(
        n_rounds=args.rounds,
        max_depth=args.depth,
        learning_rate=args.learning_rate,
        min_child_cover=args.min_child_cover,
        l2_leaf_penalty=args.l2,
        seed=args.seed,
    )
    model = train(split.train, config)
    Path(args.model).parent.mkdir(parents=True, exist_ok=True)
    model.save(args.model)
    report = evaluate(model, split.test)
    print(report.table("Testing results before the attack"), end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        emit_csv(split.train, out / "train.csv")
        emit_csv(split.test, out / "test.csv")
        (out / "baseline_report.txt").write_text(report.table("Testing results before the attack"), encoding="utf-8")
        (out / "baseline_report.json").write_text(report.dumps(), encoding="utf-8")
    print(f"wrote {args.model}")
    return EXIT_OK


def cmd_attack(args) -> int:
    model = _load_model(args.model)
    data = _load_dataset(args.data)
    search_rows = None
    if args.epsilon_scope != "full":
        split = stratified_split(data, args.test_fraction, args.seed)
        search_rows = scope_rows(args.epsilon_scope, split)
    try:
        result = run_attack(model, data, excluded=_csv_list(args.exclude), k=args.top_k, search_rows=search_rows)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    out = Path(args.out)
    write_attack_artifacts(result, data, out)
    plan = result.plan
    print("Feature importance (mean |SHAP|):")
    for name, v in result.importance.table():
        print(f"  {name:<14} {v:.6f}")
    print(f"selected feature: {plan.feature_name} (index {plan.feature_index})")
    print(f"source row {plan.source_row}: shap {plan.source_shap:.6g}, epsilon {plan.epsilon:g}")
    print(f"adversarial samples: {len(result.adversarial)}; artifacts in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    original = _load_dataset(args.original)
    adversarial = _load_dataset(args.adversarial)
    if len(adversarial) == 0:
        raise InputError(f"{args.adversarial} contains no adversarial samples")
    if np.any(adversarial.y != 1):
        raise InputError(f"{args.adversarial}: adversarial samples must keep label 1")
    pre = evaluate(model, original)
    rate = evasion_rate(model, adversarial)
    benign = original.y == 0
    post_x = np.concatenate([original.x[benign], adversarial.x])
    post_y = np.concatenate([np.zeros(int(benign.sum()), dtype=np.int8), adversarial.y])
    post = compute_report(confusion(model.predict_class(post_x), post_y), evasion_rate=rate)
    print(pre.table("Testing results before the attack"))
    print(post.table("Testing results after the attack"))
    print(f"evasion rate: {rate:.4f} ({int(round(rate * len(adversarial)))}/{len(adversarial)} adversarial samples classified benign)")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "baseline_report.json").write_text(pre.dumps(), encoding="utf-8")
        (out / "attack_report.json").write_text(post.dumps(), encoding="utf-8")
    if args.min_evasion is not None and rate < args.min_evasion:
        print(f"evasion rate {rate:.4f} is below the floor {args.min_evasion}", file=sys.stderr)
        return EXIT_FLOOR
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    summary = run_pipeline(cfg, args.out)
    print(f"baseline accuracy {summary['baseline_accuracy']:.4f}, macro F1 {summary['baseline_macro_f1']:.4f}")
    print(f"selected feature {summary['selected_feature']}: epsilon {summary['epsilon']:g} "
          f"(row {summary['source_row']}, shap {summary['source_shap']:.6g})")
    print(f"adversarial samples {summary['n_adversarial']}, evasion rate {summary['evasion_rate']:.4f}")
    print(f"artifacts and manifest in {args.out}")
    failures = check_floors(cfg, summary)
    for f in failures:
        print(f, file=sys.stderr)
    return EXIT_FLOOR if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advexplain", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", help="extract per-packet features from pcap files")
    s.add_argument("pcaps", nargs="+")
    s.add_argument("--label", type=int, choices=(0, 1), required=True, help="0 benign, 1 malicious")
    s.add_argument("--out", required=True, help="output dataset CSV")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("synth", help="generate a synthetic dataset with a planted dominant feature")
    s.add_argument("--n-samples", type=int, default=20000)
    s.add_argument("--malicious-fraction", type=float, default=0.25)
    s.add_argument("--dominant-feature", default="frame.len")
    s.add_argument("--signal-strength", type=float, default=0.95)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="stratified split, train the detector, report on the test split")
    s.add_argument("data", help="dataset CSV")
    s.add_argument("--model", default="model.json", help="output model file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--test-fraction", type=float, default=0.25)
    s.add_argument("--rounds", type=int, default=100)
    s.add_argument("--depth", type=int, default=6)
    s.add_argument("--learning-rate", type=float, default=0.3)
    s.add_argument("--min-child-cover", type=float, default=1.0)
    s.add_argument("--l2", type=float, default=1.0)
    s.add_argument("--out", help="directory for train/test CSVs and the report")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("attack", help="explain the model and generate adversarial samples")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, help="dataset CSV to explain and attack")
    s.add_argument("--exclude", default="", help="comma-separated features the attacker cannot change")
    s.add_argument("--top-k", type=int, default=1, help="number of features to perturb")
    s.add_argument("--epsilon-scope", choices=("full", "train", "test"), default="full")
    s.add_argument("--seed", type=int, default=0, help="split seed for --epsilon-scope train/test")
    s.add_argument("--test-fraction", type=float, default=0.25)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("evaluate", help="compare detection before and after the attack")
    s.add_argument("--model", required=True)
    s.add_argument("--original", required=True, help="original (test) dataset CSV")
    s.add_argument("--adversarial", required=True, help="adversarial samples CSV")
    s.add_argument("--min-evasion", type=float, help="exit 1 if the evasion rate is below this")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", help="run every stage from one JSON config")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="run directory")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, AdvexplainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
