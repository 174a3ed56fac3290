import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_ensemble
import advexplain
from advexplain import _backend, _fallback
from advexplain.explain import _shap_rows
from advexplain.gbt import TrainConfig, train

compiled = pytest.mark.skipif(_backend._compiled is None, reason="compiled kernels not built")


@compiled
def test_compiled_backend_is_default():
    forced = os.environ.get("ADVEXPLAIN_PURE_PYTHON", "") in ("1", "true", "yes")
    assert advexplain.BACKEND == ("python" if forced else "cython")
    assert _backend.get("cython") is not _backend.get("python")


def test_env_var_forces_python():
    code = "import advexplain; print(advexplain.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"ADVEXPLAIN_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend_name():
    with pytest.raises(ValueError):
        _backend.get("fortran")
    assert _backend.get("python") is _fallback


@compiled
def test_training_bit_identical(small_synth):
    d = small_synth.take(np.arange(600))
    cfg = TrainConfig(n_rounds=4, max_depth=4)
    assert train(d, cfg, backend="cython").dumps() == train(d, cfg, backend="python").dumps()


@compiled
def test_margins_and_shap_bit_identical(small_model, small_synth):
    X = small_synth.x[:200]
    a = small_model.predict_margin(X, backend="cython")
    b = small_model.predict_margin(X, backend="python")
    assert a.tobytes() == b.tobytes()
    assert _shap_rows(small_model, X, "cython").tobytes() == _shap_rows(small_model, X, "python").tobytes()


@compiled
@pytest.mark.parametrize("seed", range(3))
def test_random_models_bit_identical(seed):
    rng = np.random.default_rng(seed)
    m = random_ensemble(rng, max_depth=6)
    X = rng.integers(0, 11, size=(50, 7)).astype(float)
    assert m.predict_margin(X, "cython").tobytes() == m.predict_margin(X, "python").tobytes()
    assert _shap_rows(m, X, "cython").tobytes() == _shap_rows(m, X, "python").tobytes()


@compiled
def test_level_scan_bit_identical(small_synth):
    X = np.ascontiguousarray(small_synth.x[:400])
    rng = np.random.default_rng(1)
    sorted_idx = np.ascontiguousarray(np.stack([np.argsort(X[:, f], kind="stable") for f in range(7)]), dtype=np.int64)
    node_of = np.ascontiguousarray(rng.integers(-1, 3, 400), dtype=np.int64)
    g = rng.normal(size=400)
    h = rng.uniform(0.01, 0.25, size=400)
    outs = [_backend.get(b).level_best_splits(X, sorted_idx, node_of, 3, g, h, 1.0, 1.0) for b in ("cython", "python")]
    for u, v in zip(*outs):
        assert np.asarray(u).tobytes() == np.asarray(v).tobytes()
