"""Wall-clock and peak-memory scaling of one mixer block versus sequence length."""
from __future__ import annotations

import csv
import dataclasses
import gc
import time
import tracemalloc
import warnings
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParameterError
from .model import Block, HyenaConfig, HyenaRecModel
from .numerics import Tensor
from .numerics.tensor import tsum
from .train import Trainer

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


@dataclass
class BenchRecord:
    mixer: str
    B: int
    L: int
    D: int
    O: int
    K: int
    steps_timed: int
    median_ms: float
    p90_ms: float
    peak_bytes: int
    fitted_exponent: float = float("nan")


@contextmanager
def single_threaded(threads: int | None = 1):
    if threads is None or threadpool_limits is None:
        yield
        return
    with threadpool_limits(limits=threads):
        yield


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if len(xs) < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _make_block(kind: str, L: int, D: int, order: int, K: int, seed: int) -> Block:
    cfg = HyenaConfig(num_items=2, d_model=D, max_len=L, num_layers=1, order=order, basis_size=K,
                      dropout=0.0, mixer=kind)
    return Block(cfg, np.random.default_rng([seed, 0]))


SCOPES = ("mixer", "block")


def _step(block: Block, x: Tensor, probe: np.ndarray, scope: str = "mixer"):
    block.zero_grad()
    # "mixer" times the token-mixing sublayer alone; "block" adds the residual FFN
    out = block.mixer(block.norm1(x)) if scope == "mixer" else block(x)
    loss = tsum(out * probe)
    loss.backward()


def time_mixer(kind: str, B: int, D: int, L_list, warmup: int = 3, reps: int = 10, *,
               order: int = 2, K: int = 64, seed: int = 0, threads: int | None = 1,
               measure_memory: bool = True, scope: str = "mixer") -> list[BenchRecord]:
    """Time forward+backward of one block per length; fit the log-log slope over ``L_list``."""
    if warmup < 3 or reps < 10:
        raise ParameterError("need warmup >= 3 and reps >= 10")
    if scope not in SCOPES:
        raise ParameterError(f"scope must be one of {SCOPES}, got {scope!r}")
    L_list = list(L_list)
    if L_list != sorted(L_list):
        raise ParameterError("L_list must be ascending")
    resolution = time.get_clock_info("perf_counter").resolution
    records = []
    with single_threaded(threads):
        for L in L_list:
            rng = np.random.default_rng([seed, 5, L])
            block = _make_block(kind, L, D, order, min(K, L), seed)
            x = Tensor(rng.normal(size=(B, L, D)), requires_grad=True)
            probe = rng.normal(size=(B, L, D))
            for _ in range(warmup):
                _step(block, x, probe, scope)
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                _step(block, x, probe, scope)
                times.append(time.perf_counter() - t0)
            med = float(np.median(times))
            if resolution > 0.01 * med:
                warnings.warn(f"timer resolution {resolution:.2e}s is coarse relative to median {med:.2e}s")
            peak = 0
            if measure_memory:
                gc.collect()
                tracemalloc.start()
                _step(block, x, probe, scope)
                peak = tracemalloc.get_traced_memory()[1]
                tracemalloc.stop()
            records.append(BenchRecord(kind, B, L, D, order, min(K, L), reps, med * 1e3,
                                       float(np.percentile(times, 90)) * 1e3, int(peak)))
            del block, x
            gc.collect()
    slope = loglog_slope([r.L for r in records], [r.median_ms for r in records])
    for r in records:
        r.fitted_exponent = slope
    return records


def memory_slope(records: list[BenchRecord]) -> float:
    return loglog_slope([r.L for r in records], [r.peak_bytes for r in records])


BENCH_FIELDS = ("mixer", "B", "L", "D", "median_ms", "p90_ms", "peak_bytes")


def write_bench_csv(path, records: list[BenchRecord]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(BENCH_FIELDS)
        for r in records:
            w.writerow([r.mixer, r.B, r.L, r.D, f"{r.median_ms:.4f}", f"{r.p90_ms:.4f}", r.peak_bytes])


def ttr_report(train_seconds: dict[str, float], dataset: str = "", path=None) -> list[dict]:
    """Training time of every model divided by the hyena model's time."""
    if "hyena" not in train_seconds:
        raise ParameterError("the hyena run is required as the normalizer")
    base = train_seconds["hyena"]
    rows = [{"model": k, "dataset": dataset, "train_seconds": v, "ttr": v / base} for k, v in train_seconds.items()]
    if path is not None:
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, ("model", "dataset", "train_seconds", "ttr"))
            w.writeheader()
            for r in rows:
                w.writerow({**r, "train_seconds": f"{r['train_seconds']:.4f}", "ttr": f"{r['ttr']:.4f}"})
    return rows


def measure_training_time(dataset, base_config: HyenaConfig, train_config, mixers=("hyena", "attention"),
                          threads: int | None = 1) -> dict[str, float]:
    """Seconds of a fixed training budget for each mixer on the same data and seed."""
    out = {}
    with single_threaded(threads):
        for kind in mixers:
            cfg = dataclasses.replace(base_config, mixer=kind)
            trainer = Trainer(HyenaRecModel(cfg, seed=train_config.seed), dataset, train_config)
            trainer.train_step()  # warm caches before timing
            t0 = time.perf_counter()
            for _ in range(train_config.max_steps - 1):
                trainer.train_step()
            out[kind] = time.perf_counter() - t0
    return out


def records_as_dicts(records):
    return [asdict(r) for r in records]
