"""AdamW training loop with periodic validation, early stopping and grid search."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (SequenceDataset, batch_from_prefixes, make_batch, sliding_examples, stage_users)
from .errors import ConfigError, DataError, HyenaRecError, NumericalError
from .evaluation import RankResult, evaluate
from .model import HyenaConfig, HyenaRecModel, load_checkpoint, save_model
from .numerics import Tensor

log = logging.getLogger(__name__)

# named RNG sub-streams derived from the run seed
SHUFFLE_STREAM = 1
DROPOUT_STREAM = 2


def is_no_decay(name: str) -> bool:
    """Biases and normalization scale/shift are exempt from weight decay."""
    return name.endswith("bias") or ".norm" in name or name.startswith("norm")


class AdamW:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, named_params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-4):
        self.params: dict[str, Tensor] = dict(named_params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def check_grads(self):
        for name, p in self.params.items():
            if p.grad is not None and not np.isfinite(p.grad).all():
                g = p.grad[np.isfinite(p.grad)]
                gmax = float(np.abs(g).max()) if g.size else float("nan")
                raise NumericalError(f"non-finite gradient in {name} (max finite |g| = {gmax:.3g})")

    def step(self):
        self.check_grads()
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay and not is_no_decay(name):
                p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.bump()

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for n in self.params:
            out[f"optim.m.{n}"] = self.m[n]
            out[f"optim.v.{n}"] = self.v[n]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], step: int):
        for n in self.params:
            self.m[n] = tensors[f"optim.m.{n}"].copy()
            self.v[n] = tensors[f"optim.v.{n}"].copy()
        self.step_count = step


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; returns the original norm."""
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


@dataclass
class TrainConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    batch_size: int = 128
    max_epochs: int = 500
    max_steps: int | None = None
    eval_interval: int = 500
    patience: int = 10
    grad_clip: float | None = 5.0
    monitor: str = "recall@10"
    ks: tuple[int, ...] = (10, 20)
    mask_seen: bool = True
    sliding_window: bool = False
    eval_batch_size: int = 256
    eval_users: int | None = None
    seed: int = 0
    log_path: str | None = None
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.eval_interval < 1 or self.patience < 1:
            raise ConfigError("batch_size, eval_interval and patience must be >= 1")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")


@dataclass
class EarlyStopState:
    patience: int = 10
    best: float = -np.inf
    best_step: int = -1
    evals_since_improve: int = 0
    best_checkpoint: str | None = None

    def update(self, value: float, step: int) -> bool:
        """Record one validation; returns True when training should stop."""
        if value > self.best:
            self.best, self.best_step, self.evals_since_improve = value, step, 0
            return False
        self.evals_since_improve += 1
        return self.evals_since_improve >= self.patience


@dataclass
class TrainState:
    model: HyenaRecModel
    optimizer: AdamW
    step: int = 0
    history: list[dict] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    early: EarlyStopState = field(default_factory=EarlyStopState)
    stopped_early: bool = False
    wall_seconds: float = 0.0


LOG_FIELDS = ("step", "split", "loss", "recall@10", "ndcg@10", "wall_ms")


class Trainer:
    """Owns the model, optimizer and schedule; every step's randomness is a pure function of (seed, step)."""

    def __init__(self, model: HyenaRecModel, dataset: SequenceDataset, config: TrainConfig):
        self.model = model
        self.dataset = dataset
        self.config = config
        self.optimizer = AdamW(model.named_parameters(), config.lr, config.betas, config.adam_eps,
                               config.weight_decay)
        self.state = TrainState(model, self.optimizer, early=EarlyStopState(config.patience))
        L = model.config.max_len
        if config.sliding_window:
            self._examples = sliding_examples(dataset)
            self._batch = lambda idx: batch_from_prefixes(dataset, [self._examples[i] for i in idx], L)
        else:
            self._examples = stage_users(dataset, "train")
            self._batch = lambda idx: make_batch(dataset, self._examples[idx], L, "train")
        if len(self._examples) == 0:
            raise DataError("no training examples")
        self._valid_users = stage_users(dataset, "valid")
        if config.eval_users is not None and config.eval_users < len(self._valid_users):
            self._valid_users = self._valid_users[:config.eval_users]
        self._perm_cache: tuple[int, np.ndarray] | None = None
        self._log_file = None
        self.extra_meta: dict[str, str] = {}

    @property
    def steps_per_epoch(self) -> int:
        return -(-len(self._examples) // self.config.batch_size)

    @property
    def total_steps(self) -> int:
        cap = self.steps_per_epoch * self.config.max_epochs
        return cap if self.config.max_steps is None else min(cap, self.config.max_steps)

    def batch_for_step(self, step: int):
        epoch, pos = divmod(step, self.steps_per_epoch)
        if self._perm_cache is None or self._perm_cache[0] != epoch:
            rng = np.random.default_rng([self.config.seed, SHUFFLE_STREAM, epoch])
            self._perm_cache = (epoch, rng.permutation(len(self._examples)))
        bs = self.config.batch_size
        return self._batch(self._perm_cache[1][pos * bs:(pos + 1) * bs])

    def train_step(self) -> float:
        step = self.state.step
        batch = self.batch_for_step(step)
        rng = np.random.default_rng([self.config.seed, DROPOUT_STREAM, step])
        self.model.zero_grad()
        loss, _ = self.model.forward(batch, training=True, rng=rng)
        loss.backward()
        self.optimizer.check_grads()
        if self.config.grad_clip:
            clip_grad_norm(self.model.parameters(), self.config.grad_clip)
        self.optimizer.step()
        self.state.step += 1
        value = loss.item()
        self.state.losses.append(value)
        return value

    def validate(self) -> RankResult:
        return evaluate(self.model, self.dataset, "valid", self.config.ks, mask_seen=self.config.mask_seen,
                        batch_size=self.config.eval_batch_size, users=self._valid_users)

    def _log(self, row: dict):
        if self.config.log_path is None:
            return
        if self._log_file is None:
            path = Path(self.config.log_path)
            new = not path.exists() or path.stat().st_size == 0
            self._log_file = path.open("a", newline="")
            self._writer = csv.DictWriter(self._log_file, LOG_FIELDS)
            if new:
                self._writer.writeheader()
        self._writer.writerow({k: row.get(k, "") for k in LOG_FIELDS})

    def _best_path(self) -> Path | None:
        d = self.config.checkpoint_dir
        return None if d is None else Path(d) / "best.ckpt"

    def fit(self) -> TrainState:
        st = self.state
        best_params = None
        t_start = time.perf_counter()
        try:
            while st.step < self.total_steps:
                t0 = time.perf_counter()
                loss = self.train_step()
                self._log({"step": st.step, "split": "train", "loss": f"{loss:.10g}",
                           "wall_ms": f"{(time.perf_counter() - t0) * 1e3:.3f}"})
                if st.step % self.config.eval_interval == 0 or st.step == self.total_steps:
                    if self._validate_and_check(st, t0):
                        break
                    if st.early.best_step == st.step:
                        best_params = {n: p.data.copy() for n, p in self.model.named_parameters()}
                        if self._best_path() is not None:
                            self.save(self._best_path())
                            st.early.best_checkpoint = str(self._best_path())
        finally:
            if self._log_file is not None:
                self._log_file.close()
                self._log_file = None
        st.wall_seconds = time.perf_counter() - t_start
        if best_params is not None:
            self.model.load_state_dict(best_params)
        return st

    def _validate_and_check(self, st: TrainState, t0: float) -> bool:
        res = self.validate()
        metrics = res.metrics()
        value = self._monitor_value(res)
        if not np.isfinite(value):
            if self._best_path() is not None and st.early.best_checkpoint is None:
                self.save(Path(self.config.checkpoint_dir) / "last.ckpt")
            raise NumericalError(f"validation metric {self.config.monitor} is not finite at step {st.step}")
        entry = {"step": st.step, "loss": res.loss, **metrics, self.config.monitor: value}
        st.history.append(entry)
        self._log({"step": st.step, "split": "valid", "loss": f"{res.loss:.10g}",
                   "recall@10": f"{_metric(res, 'recall', 10):.6f}", "ndcg@10": f"{_metric(res, 'ndcg', 10):.6f}",
                   "wall_ms": f"{(time.perf_counter() - t0) * 1e3:.3f}"})
        log.info("step %d valid %s=%.4f loss=%.4f", st.step, self.config.monitor, value, res.loss)
        stop = st.early.update(value, st.step)
        st.stopped_early = stop
        return stop

    def _monitor_value(self, res: RankResult) -> float:
        kind, _, k = self.config.monitor.partition("@")
        k = int(k)
        if k not in res.ks:
            res = RankResult.from_ranks(res.ranks, tuple(res.ks) + (k,), res.loss)
        table = {"recall": res.recall, "ndcg": res.ndcg}.get(kind)
        if table is None:
            raise ConfigError(f"unknown monitor metric {self.config.monitor!r}")
        return table[k]

    # -- persistence -----------------------------------------------------------
    def save(self, path):
        meta = {"train.step": self.state.step, "train.seed": self.config.seed, **self.extra_meta}
        save_model(self.model, path, meta, self.optimizer.state_tensors())

    def load(self, path):
        tensors, meta = load_checkpoint(path)
        self.model.load_state_dict(tensors)
        step = int(meta["train.step"])
        self.optimizer.load_state_tensors(tensors, step)
        self.state.step = step


def _metric(res: RankResult, kind: str, k: int) -> float:
    if k not in res.ks:
        res = RankResult.from_ranks(res.ranks, (k,))
    return (res.recall if kind == "recall" else res.ndcg)[k]


def fit(dataset: SequenceDataset, model_config: HyenaConfig, train_config: TrainConfig | None = None) -> TrainState:
    """Train a fresh model; returns the state with the best validation parameters loaded."""
    train_config = train_config or TrainConfig()
    if dataset.num_users == 0:
        raise DataError("empty dataset")
    model = HyenaRecModel(model_config, seed=train_config.seed)
    return Trainer(model, dataset, train_config).fit()


# -- grid search ------------------------------------------------------------------
def grid_search(dataset: SequenceDataset, model_config: HyenaConfig, train_config: TrainConfig,
                grid: dict[str, list], out_csv=None) -> list[dict]:
    """Train every combination of ``grid`` values and rank by validation Recall@10.

    Keys may name either model or training fields. Ties go to the lower
    validation loss, then to the earlier position in the grid. Failed runs are
    kept with an ``error`` entry and ranked last.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid must contain at least one value per key")
    model_fields = {f.name for f in dataclasses.fields(HyenaConfig)}
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(grid) - model_fields - train_fields
    if unknown:
        raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
    keys = list(grid)
    rows = []
    for order, values in enumerate(itertools.product(*(grid[k] for k in keys))):
        combo = dict(zip(keys, values))
        mc = dataclasses.replace(model_config, **{k: v for k, v in combo.items() if k in model_fields})
        tc = dataclasses.replace(train_config, **{k: v for k, v in combo.items() if k in train_fields})
        row = {**combo, "order": order}
        try:
            st = fit(dataset, mc, tc)
            best = max(st.history, key=lambda h: h["recall@10"]) if st.history else {}
            row.update({"recall@10": best.get("recall@10", float("nan")),
                        "ndcg@10": best.get("ndcg@10", float("nan")),
                        "valid_loss": best.get("loss", float("nan")),
                        "steps": st.step, "error": ""})
        except HyenaRecError as exc:
            row.update({"recall@10": float("nan"), "ndcg@10": float("nan"),
                        "valid_loss": float("nan"), "steps": 0, "error": str(exc)})
        rows.append(row)

    def key(r):
        rec = r["recall@10"]
        failed = not np.isfinite(rec)
        loss = r["valid_loss"] if np.isfinite(r["valid_loss"]) else np.inf
        return (failed, -rec if not failed else 0.0, loss, r["order"])

    rows.sort(key=key)
    if out_csv is not None:
        fields = keys + ["recall@10", "ndcg@10", "valid_loss", "steps", "order", "error"]
        with open(out_csv, "w", newline="") as f:
            w = csv.DictWriter(f, fields)
            w.writeheader()
            for r in rows:
                w.writerow({k: r.get(k, "") for k in fields})
    return rows
