"""HyenaRec network: tied item embeddings, pre-norm mixer blocks, next-item head."""
from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DataFormatError
from .filters import FAMILIES
from .numerics import (FeedForward, LayerNorm, Module, Tensor, cross_entropy, dropout,
                       embedding, matmul, no_grad, param)
from .operator import CausalSelfAttention, HyenaOperator

MIXERS = ("hyena", "attention")


@dataclass
class HyenaConfig:
    num_items: int
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

    def __post_init__(self):
        self.basis_size = min(self.basis_size, self.max_len)
        if self.num_items < 2:
            raise ConfigError(f"num_items must be >= 2, got {self.num_items}")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.basis not in FAMILIES[:3]:
            raise ConfigError(f"basis must be one of {FAMILIES[:3]}, got {self.basis!r}")
        if self.mixer not in MIXERS:
            raise ConfigError(f"mixer must be one of {MIXERS}, got {self.mixer!r}")
        if self.max_len < 2:
            raise ConfigError(f"max_len must be >= 2, got {self.max_len}")

    @property
    def pad_id(self) -> int:
        return self.num_items

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class Block(Module):
    """``h' = h + Drop(Mixer(Norm(h)))``, ``h'' = h' + Drop(FFN(Norm(h')))``; padding rows kept at zero."""

    def __init__(self, cfg: HyenaConfig, rng: np.random.Generator):
        self.norm1 = LayerNorm(cfg.d_model)
        if cfg.mixer == "hyena":
            self.mixer = HyenaOperator(
                cfg.d_model, cfg.max_len, rng, order=cfg.order, basis_size=cfg.basis_size,
                basis=cfg.basis, short_width=cfg.short_width, glu=cfg.glu, pk=cfg.pk,
                kernel_taps=cfg.kernel_taps, share_stage_coeffs=cfg.share_stage_coeffs,
                eps_norm=cfg.eps_norm, init_std=cfg.init_std)
        else:
            self.mixer = CausalSelfAttention(cfg.d_model, rng, cfg.init_std)
        self.norm2 = LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_mult, rng, cfg.init_std)
        self._p = cfg.dropout

    def forward(self, h: Tensor, mask: np.ndarray | None = None, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        m = None if mask is None else mask[..., None].astype(np.float64)
        h = h + dropout(self.mixer(self.norm1(h), mask), self._p, rng, training)
        if m is not None:
            h = h * m
        h = h + dropout(self.ffn(self.norm2(h)), self._p, rng, training)
        if m is not None:
            h = h * m
        return h


class HyenaRecModel(Module):
    """Full next-item model. The output head reuses ``embedding.weight`` (no copy)."""

    def __init__(self, cfg: HyenaConfig, seed: int = 0):
        self.config = cfg
        rng = np.random.default_rng([seed, 0])
        self.embedding = _Embedding(cfg.num_items, cfg.d_model, rng, cfg.init_std)
        self.position = None
        if cfg.mixer == "attention":
            self.position = _Embedding(cfg.max_len, cfg.d_model, rng, cfg.init_std)
        self.blocks = [Block(cfg, rng) for _ in range(cfg.num_layers)]
        self.head_bias = param(np.zeros(cfg.num_items))

    @property
    def head_weight(self) -> Tensor:
        return self.embedding.weight

    def embed(self, items: np.ndarray) -> Tensor:
        items = np.asarray(items)
        bad = (items < 0) | (items > self.config.pad_id)
        if bad.any():
            pos = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DataError(f"item id {items[pos]} at position {pos} outside [0, {self.config.num_items}]")
        return embedding(self.embedding.weight, items, pad_id=self.config.pad_id)

    def hidden(self, items: np.ndarray, mask: np.ndarray | None = None, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
        items = np.asarray(items)
        if mask is None:
            mask = items != self.config.pad_id
        h = self.embed(items)
        if self.position is not None:
            L = items.shape[1]
            # positions count back from the most recent item, so left padding does not shift them
            rel = np.arange(L - 1, -1, -1)
            pos = embedding(self.position.weight, np.broadcast_to(rel, items.shape))
            h = h + pos * mask[..., None].astype(np.float64)
        for block in self.blocks:
            h = block(h, mask, training, rng)
        return h

    def logits(self, h_last: Tensor) -> Tensor:
        return matmul(h_last, self.head_weight.T) + self.head_bias

    def forward(self, batch, training: bool = False, rng: np.random.Generator | None = None):
        """Return ``(loss, logits)`` for a ``SequenceBatch``."""
        h = self.hidden(batch.items, batch.mask, training, rng)
        z = self.logits(h[:, -1, :])
        return cross_entropy(z, batch.targets), z

    def score(self, batch) -> np.ndarray:
        with no_grad():
            h = self.hidden(batch.items, batch.mask)
            return self.logits(h[:, -1, :]).data

    def filter_banks(self):
        return [bank for b in self.blocks if isinstance(b.mixer, HyenaOperator) for bank in b.mixer.filters]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise DataFormatError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise DataFormatError(f"parameter {name}: shape {arr.shape} != {p.shape}")
            p.data[...] = arr
            p.bump()


class _Embedding(Module):
    def __init__(self, n: int, d: int, rng: np.random.Generator, std: float):
        self.weight = param(rng.normal(0.0, std, size=(n, d)))


# -- checkpoint file ----------------------------------------------------------------
MAGIC = b"HYRECKPT"
VERSION = 1


def _format_value(v) -> str:
    return "none" if v is None else str(v).lower() if isinstance(v, bool) else str(v)


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict):
    """Write ``meta`` as a ``key = value`` block followed by named float64 tensors."""
    text = "".join(f"{k} = {_format_value(v)}\n" for k, v in meta.items()).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(text)), text, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    buf = Path(path).read_bytes()
    if buf[:len(MAGIC)] != MAGIC:
        raise DataFormatError(f"{path}: bad checkpoint magic")
    off = len(MAGIC)
    try:
        version, tlen = struct.unpack_from("<II", buf, off)
        if version != VERSION:
            raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
        off += 8
        meta = {}
        for line in buf[off:off + tlen].decode().splitlines():
            k, _, v = line.partition(" = ")
            meta[k] = v
        off += tlen
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + nlen].decode()
            off += nlen
            (rank,) = struct.unpack_from("<I", buf, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", buf, off)
            off += 8 * rank
            n = int(np.prod(shape)) if rank else 1
            tensors[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
            off += 8 * n
    except (struct.error, ValueError) as exc:
        raise DataFormatError(f"{path}: truncated checkpoint ({exc})") from None
    return tensors, meta


def config_from_meta(meta: dict[str, str]) -> HyenaConfig:
    kwargs = {}
    for f in dataclasses.fields(HyenaConfig):
        key = f"model.{f.name}"
        if key in meta:
            kwargs[f.name] = _parse_field(f, meta[key])
    return HyenaConfig(**kwargs)


def _parse_field(f, raw: str):
    kind = str(f.type)
    if raw == "none":
        return None
    if "bool" in kind:
        return raw == "true"
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def save_model(model: HyenaRecModel, path, extra_meta: dict | None = None, extra_tensors: dict | None = None):
    meta = {f"model.{k}": v for k, v in model.config.to_dict().items()}
    meta.update(extra_meta or {})
    tensors = dict(model.state_dict())
    tensors.update(extra_tensors or {})
    save_checkpoint(path, tensors, meta)


def load_model(path) -> tuple[HyenaRecModel, dict[str, np.ndarray], dict[str, str]]:
    tensors, meta = load_checkpoint(path)
    model = HyenaRecModel(config_from_meta(meta))
    model.load_state_dict(tensors)
    return model, tensors, meta
