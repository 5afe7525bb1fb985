"""Flat ``key = value`` run configuration shared by every CLI command."""
from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import HyenaConfig
from .train import TrainConfig

ABLATIONS = ("no-pk", "no-glu")
DATA_FORMATS = ("csv", "tsv", "ml1m", "cache")


@dataclass
class RunConfig:
    # data
    dataset: str = "copy"
    format: str = "csv"
    cache: str | None = None
    subsample_users: int | None = None
    copy_users: int = 5000
    copy_len: int = 128
    copy_lag: int = 64
    copy_vocab: int = 50
    # model
    d_model: int = 64
    max_len: int = 200
    num_layers: int = 2
    order: int = 2
    basis_size: int = 64
    basis: str = "legendre"
    dropout: float = 0.2
    glu: bool = True
    pk: bool = True
    mixer: str = "hyena"
    short_width: int = 3
    kernel_taps: int | None = None
    share_stage_coeffs: bool = False
    ffn_mult: int = 4
    eps_norm: float = 1e-8
    init_std: float = 0.02
    # training
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 128
    max_epochs: int = 500
    max_steps: int | None = None
    eval_interval: int = 500
    patience: int = 10
    grad_clip: float | None = 5.0
    monitor: str = "recall@10"
    sliding_window: bool = False
    eval_users: int | None = None
    # evaluation
    ks: tuple[int, ...] = (10, 20)
    mask_seen: bool = True
    # run
    output_dir: str = "runs/default"
    threads: int = 1
    ablate: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.format not in DATA_FORMATS:
            raise ConfigError(f"format must be one of {DATA_FORMATS}, got {self.format!r}")
        for a in self.ablate:
            if a not in ABLATIONS:
                raise ConfigError(f"unknown ablation {a!r}; choose from {ABLATIONS}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def is_copy_task(self) -> bool:
        return self.dataset == "copy"

    def model_config(self, num_items: int) -> HyenaConfig:
        names = {f.name for f in dataclasses.fields(HyenaConfig)} - {"num_items"}
        kwargs = {n: getattr(self, n) for n in names}
        if "no-pk" in self.ablate:
            kwargs["pk"] = False
        if "no-glu" in self.ablate:
            kwargs["glu"] = False
        if self.is_copy_task:
            kwargs["max_len"] = self.copy_len
        return HyenaConfig(num_items=num_items, **kwargs)

    def train_config(self, log_path=None, checkpoint_dir=None) -> TrainConfig:
        names = {f.name for f in dataclasses.fields(TrainConfig)} & {f.name for f in dataclasses.fields(self)}
        kwargs = {n: getattr(self, n) for n in names}
        # the copy target is usually an item already in the history
        if self.is_copy_task:
            kwargs["mask_seen"] = False
        return TrainConfig(log_path=log_path, checkpoint_dir=checkpoint_dir, **kwargs)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _strip_optional(tp):
    args = typing.get_args(tp)
    if typing.get_origin(tp) in (typing.Union, types.UnionType) and type(None) in args:
        rest = [a for a in args if a is not type(None)]
        return rest[0], True
    return tp, False


def parse_value(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    tp, optional = _strip_optional(typing.get_type_hints(RunConfig)[key])
    raw = raw.strip()
    if optional and raw.lower() in ("none", ""):
        return None
    try:
        if tp is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typing.get_origin(tp) is tuple:
            (inner, *_) = typing.get_args(tp)
            return tuple(inner(p.strip()) for p in raw.split(",") if p.strip())
        return tp(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def parse_lines(lines) -> dict:
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        key = key.strip()
        out[key] = parse_value(key, value)
    return out


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override must be key=value, got {item!r}")
        out[key.strip()] = parse_value(key.strip(), value)
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_lines(p.read_text().splitlines()))
    values.update(overrides or {})
    return RunConfig(**values)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {format_value(getattr(cfg, f.name))}\n" for f in dataclasses.fields(cfg))


def write_config(cfg: RunConfig, path):
    Path(path).write_text(dump_config(cfg))
