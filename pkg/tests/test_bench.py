import csv
import warnings

import numpy as np
import pytest

from hyenarec.bench import (BENCH_FIELDS, loglog_slope, measure_training_time, memory_slope, time_mixer,
                            ttr_report, write_bench_csv)
from hyenarec.data import synth_copy_task
from hyenarec.errors import ParameterError
from hyenarec.model import HyenaConfig
from hyenarec.train import TrainConfig


def quick(kind="hyena", L=(16, 32), **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return time_mixer(kind, 1, 4, L, 3, 10, K=4, **kw)


def test_slope_of_power_law():
    xs = np.array([256, 512, 1024, 2048])
    assert abs(loglog_slope(xs, 3.0 * xs ** 1.5) - 1.5) < 1e-12


@pytest.mark.parametrize("kw", [dict(warmup=2), dict(reps=9), dict(L_list=[32, 16])])
def test_preconditions(kw):
    args = dict(kind="hyena", B=1, D=4, L_list=[16, 32], warmup=3, reps=10)
    args.update(kw)
    with pytest.raises(ParameterError):
        time_mixer(**args)


def test_bad_scope():
    with pytest.raises(ParameterError):
        quick(scope="everything")


@pytest.mark.parametrize("kind", ["hyena", "attention"])
@pytest.mark.parametrize("scope", ["mixer", "block"])
def test_records(kind, scope):
    recs = quick(kind, scope=scope)
    assert [r.L for r in recs] == [16, 32]
    assert all(r.median_ms > 0 and r.p90_ms >= r.median_ms and r.peak_bytes > 0 for r in recs)
    assert len({r.fitted_exponent for r in recs}) == 1
    assert np.isfinite(memory_slope(recs))


def test_coarse_timer_warns(monkeypatch):
    import time

    info = time.get_clock_info("perf_counter")
    fake = type("I", (), {"resolution": 10.0, "adjustable": info.adjustable, "implementation": info.implementation,
                          "monotonic": info.monotonic})()
    monkeypatch.setattr(time, "get_clock_info", lambda name: fake)
    with pytest.warns(UserWarning, match="resolution"):
        time_mixer("hyena", 1, 4, [16], 3, 10, K=4, measure_memory=False)


def test_repeat_runs_stable():
    a = quick(L=(256,), measure_memory=False)[0].median_ms
    b = quick(L=(256,), measure_memory=False)[0].median_ms
    assert abs(a - b) / max(a, b) <= 0.25


def test_csv_columns(tmp_path):
    path = tmp_path / "b.csv"
    write_bench_csv(path, quick())
    with path.open() as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == BENCH_FIELDS and len(rows) == 3


def test_ttr_identity_and_rows(tmp_path):
    rows = ttr_report({"hyena": 2.5, "attention": 5.0}, "toy", tmp_path / "t.csv")
    assert rows[0]["ttr"] == 1.0 and rows[1]["ttr"] == 2.0 and len(rows) == 2
    with pytest.raises(ParameterError):
        ttr_report({"attention": 1.0})


def test_training_time_per_mixer():
    ds = synth_copy_task(40, 16, 2, 10)
    cfg = HyenaConfig(num_items=10, d_model=8, max_len=16, num_layers=1, basis_size=4, dropout=0.0)
    out = measure_training_time(ds, cfg, TrainConfig(max_steps=3, batch_size=8))
    assert set(out) == {"hyena", "attention"} and all(v > 0 for v in out.values())
