import importlib.util
from pathlib import Path

import pytest

from advexplain import _backend

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(_backend._compiled is None, reason="compiled kernels not built")
def test_benchmark_runs_and_backends_agree(capsys):
    spec = importlib.util.spec_from_file_location("bench_kernels", BENCH)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    assert bench.main(["--rows", "300", "--shap-rows", "10", "--rounds", "2", "--repeat", "1"]) == 0
    rows = [l for l in capsys.readouterr().out.splitlines()[1:] if l.strip()]
    assert len(rows) == 3
    assert all(l.rstrip().endswith("True") for l in rows)
