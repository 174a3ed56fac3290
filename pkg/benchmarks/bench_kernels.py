"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--rows N] [--shap-rows N] [--rounds N] [--repeat N]

Each kernel runs on identical inputs in both backends; outputs are compared
bytewise so a speedup never hides a divergence.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from advexplain import _backend, synth
from advexplain.explain import _shap_rows
from advexplain.gbt import TrainConfig, train


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def as_bytes(out) -> bytes:
    if isinstance(out, np.ndarray):
        return out.tobytes()
    return out.dumps().encode()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=5000, help="rows for training and prediction")
    ap.add_argument("--shap-rows", type=int, default=200, help="rows explained per backend")
    ap.add_argument("--rounds", type=int, default=5, help="boosting rounds for the training benchmark")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if _backend._compiled is None:
        print("compiled kernels are not built; nothing to compare")
        return 1

    data = synth.generate(synth.SynthConfig(n_samples=args.rows, seed=0))
    model = train(data, TrainConfig(n_rounds=50, max_depth=6))
    X = data.x
    Xs = np.ascontiguousarray(X[: args.shap_rows])
    cfg = TrainConfig(n_rounds=args.rounds, max_depth=6)

    cases = [
        (f"predict_margin ({len(X)} rows, 50 trees)", lambda b: model.predict_margin(X, backend=b)),
        (f"tree_shap ({len(Xs)} rows, 50 trees)", lambda b: _shap_rows(model, Xs, backend=b, threads=1)),
        (f"train ({len(X)} rows, {args.rounds} rounds)", lambda b: train(data, cfg, backend=b)),
    ]
    print(f"{'kernel':<36} {'cython s':>10} {'python s':>10} {'speedup':>9}  identical")
    for name, run in cases:
        tc, oc = best_of(lambda: run("cython"), args.repeat)
        tp, op = best_of(lambda: run("python"), 1)
        same = as_bytes(oc) == as_bytes(op)
        print(f"{name:<36} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}x  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
