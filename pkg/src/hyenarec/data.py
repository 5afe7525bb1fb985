"""Interaction logs, leave-one-out splits, left-padded batches, synthetic probes."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DataFormatError, ParameterError

log = logging.getLogger(__name__)

FORMATS = ("csv", "tsv", "ml1m")
STAGES = ("train", "valid", "test")
MIN_ITEM_COUNT = 5
MIN_USER_LEN = 2
CACHE_VERSION = 1


@dataclass
class InteractionLog:
    records: list[tuple[str, str, int]] = field(default_factory=list)
    skipped: int = 0

    def __len__(self):
        return len(self.records)


def _looks_like_header(fields: list[str]) -> bool:
    try:
        int(fields[2])
        return False
    except (ValueError, IndexError):
        return fields[0].strip().lower().startswith("user")


def load_log(path, format: str = "csv") -> InteractionLog:
    """Parse ``user,item,timestamp`` rows; malformed lines are skipped and counted.

    ``ml1m`` reads the MovieLens ``UserID::MovieID::Rating::Timestamp`` layout
    and ignores the rating.
    """
    if format not in FORMATS:
        raise ParameterError(f"format must be one of {FORMATS}, got {format!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if format == "ml1m":
        rows = [line.split("::") for line in text.splitlines()]
        cols = (0, 1, 3)
        width = 4
    else:
        rows = list(csv.reader(io.StringIO(text), delimiter="," if format == "csv" else "\t"))
        cols = (0, 1, 2)
        width = 3

    out = InteractionLog()
    seen = set()
    bad_lines = []
    total = 0
    for lineno, fields in enumerate(rows, start=1):
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            continue
        if lineno == 1 and format != "ml1m" and _looks_like_header(fields):
            continue
        total += 1
        if len(fields) != width:
            bad_lines.append(lineno)
            continue
        user, item, ts = (fields[c].strip() for c in cols)
        try:
            ts = int(ts)
        except ValueError:
            bad_lines.append(lineno)
            continue
        if not user or not item:
            bad_lines.append(lineno)
            continue
        key = (user, item, ts)
        if key in seen:
            continue
        seen.add(key)
        out.records.append(key)
    out.skipped = len(bad_lines)
    if bad_lines:
        if total and len(bad_lines) > total / 2:
            raise DataFormatError(f"{path}: {len(bad_lines)} of {total} lines malformed")
        warnings.warn(f"{path}: skipped {len(bad_lines)} malformed line(s), first at line {bad_lines[0]}")
    return out


def _natural_key(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


@dataclass
class SequenceDataset:
    """Per-user chronological item-index sequences with a leave-one-out split.

    ``sequences[u][-1]`` is the test target, ``[-2]`` the validation target and
    the rest is the training prefix.
    """

    users: list[str]
    items: list[str]
    sequences: list[np.ndarray]
    name: str = "dataset"

    def __post_init__(self):
        self._item_index = {s: i for i, s in enumerate(self.items)}

    @property
    def num_items(self) -> int:
        return len(self.items)

    @property
    def num_users(self) -> int:
        return len(self.users)

    def item_index(self, item: str) -> int:
        return self._item_index[item]

    def split(self, u: int) -> tuple[np.ndarray, int, int]:
        s = self.sequences[u]
        return s[:-2], int(s[-2]), int(s[-1])

    def stats(self) -> dict:
        inter = int(sum(len(s) for s in self.sequences))
        n_u, n_i = self.num_users, self.num_items
        return {
            "users": n_u,
            "items": n_i,
            "avg_length": inter / n_u if n_u else 0.0,
            "interactions": inter,
            "sparsity": 1.0 - inter / (n_u * n_i) if n_u and n_i else 1.0,
        }

    def to_log(self) -> InteractionLog:
        """Re-serialize as an interaction log with synthetic increasing timestamps."""
        recs = [(u, self.items[i], t) for u, seq in zip(self.users, self.sequences)
                for t, i in enumerate(seq)]
        return InteractionLog(recs)

    def subsample(self, n_users: int, seed: int = 0) -> SequenceDataset:
        if n_users >= self.num_users:
            return self
        keep = np.sort(np.random.default_rng([seed, 3]).choice(self.num_users, n_users, replace=False))
        return SequenceDataset([self.users[u] for u in keep], self.items,
                               [self.sequences[u] for u in keep], self.name)


def preprocess(log: InteractionLog, min_item_count: int = MIN_ITEM_COUNT,
               min_user_len: int = MIN_USER_LEN, name: str = "dataset") -> SequenceDataset:
    """Filter rare items and short users to a fixed point, then order by time.

    Ties in timestamp keep input order (stable sort).
    """
    if not log.records:
        raise DataError("interaction log is empty")
    recs = list(log.records)
    while True:
        item_counts = Counter(r[1] for r in recs)
        kept = [r for r in recs if item_counts[r[1]] >= min_item_count]
        user_counts = Counter(r[0] for r in kept)
        kept = [r for r in kept if user_counts[r[0]] >= min_user_len]
        if len(kept) == len(recs):
            break
        recs = kept
    if not recs:
        raise DataError("no interactions survive filtering")

    by_user: dict[str, list[tuple[int, int, str]]] = {}
    for order, (u, i, t) in enumerate(recs):
        by_user.setdefault(u, []).append((t, order, i))
    items = sorted({r[1] for r in recs}, key=_natural_key)
    index = {s: k for k, s in enumerate(items)}
    users = sorted(by_user, key=_natural_key)
    seqs = [np.array([index[i] for _, _, i in sorted(by_user[u], key=lambda x: (x[0], x[1]))], dtype=np.int64)
            for u in users]
    return SequenceDataset(users, items, seqs, name)


@dataclass
class SequenceBatch:
    items: np.ndarray    # [B, L] int, left-padded with pad_id
    mask: np.ndarray     # [B, L] bool, True on real items
    targets: np.ndarray  # [B]
    users: np.ndarray    # [B] dataset user indices

    def __len__(self):
        return len(self.targets)


def stage_example(dataset: SequenceDataset, u: int, stage: str) -> tuple[np.ndarray, int]:
    """(input history, target) for one user at ``stage``."""
    s = dataset.sequences[u]
    if stage == "train":
        train = s[:-2]
        return train[:-1], int(train[-1]) if len(train) else -1
    if stage == "valid":
        return s[:-2], int(s[-2])
    if stage == "test":
        return s[:-1], int(s[-1])
    raise ParameterError(f"stage must be one of {STAGES}, got {stage!r}")


def pad_histories(histories, L_max: int, pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    items = np.full((len(histories), L_max), pad_id, dtype=np.int64)
    for r, h in enumerate(histories):
        h = h[-L_max:]
        if len(h):
            items[r, L_max - len(h):] = h
    return items, items != pad_id


def make_batch(dataset: SequenceDataset, user_ids, L_max: int, stage: str) -> SequenceBatch:
    """Left-padded batch; keeps the most recent ``L_max`` inputs; skips users with no input."""
    hist, targets, kept = [], [], []
    skipped = 0
    for u in user_ids:
        h, t = stage_example(dataset, int(u), stage)
        if len(h) == 0:
            skipped += 1
            continue
        hist.append(h)
        targets.append(t)
        kept.append(int(u))
    if skipped:
        log.warning("skipped %d user(s) with empty %s input", skipped, stage)
    items, mask = pad_histories(hist, L_max, dataset.num_items)
    return SequenceBatch(items, mask, np.array(targets, dtype=np.int64), np.array(kept, dtype=np.int64))


def stage_users(dataset: SequenceDataset, stage: str) -> np.ndarray:
    """Users that yield a non-empty input at ``stage``."""
    need = {"train": 4, "valid": 3, "test": 2}[stage]
    return np.array([u for u, s in enumerate(dataset.sequences) if len(s) >= need], dtype=np.int64)


def sliding_examples(dataset: SequenceDataset) -> list[tuple[int, int]]:
    """(user, end) pairs for every training prefix: input ``seq[:end]``, target ``seq[end]``."""
    return [(u, e) for u, s in enumerate(dataset.sequences) for e in range(1, len(s) - 2)]


def batch_from_prefixes(dataset: SequenceDataset, pairs, L_max: int) -> SequenceBatch:
    hist = [dataset.sequences[u][:e] for u, e in pairs]
    targets = np.array([dataset.sequences[u][e] for u, e in pairs], dtype=np.int64)
    items, mask = pad_histories(hist, L_max, dataset.num_items)
    return SequenceBatch(items, mask, targets, np.array([u for u, _ in pairs], dtype=np.int64))


def synth_copy_task(num_users: int, L: int, lag: int, vocab: int, seed: int = 0) -> SequenceDataset:
    """Random sequences whose every split target repeats the item ``lag`` steps back.

    Each user gets ``L + 3`` items, so the train, validation and test inputs
    all have length >= L and satisfy ``target == input[-lag]``.
    """
    if not 1 <= lag < L:
        raise ParameterError(f"lag must satisfy 1 <= lag < L, got lag={lag}, L={L}")
    if vocab < 2:
        raise ParameterError(f"vocab must be >= 2, got {vocab}")
    rng = np.random.default_rng([seed, 4])
    n = L + 3
    seqs = rng.integers(0, vocab, size=(num_users, n))
    for pos in (n - 3, n - 2, n - 1):
        seqs[:, pos] = seqs[:, pos - lag]
    return SequenceDataset([str(u) for u in range(num_users)], [str(i) for i in range(vocab)],
                           [row.astype(np.int64) for row in seqs], name=f"copy_L{L}_lag{lag}")


# -- preprocessed cache --------------------------------------------------------------
def source_hash(path, min_item_count: int = MIN_ITEM_COUNT, min_user_len: int = MIN_USER_LEN,
                format: str = "csv") -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    h.update(f"|{format}|{min_item_count}|{min_user_len}|v{CACHE_VERSION}".encode())
    return h.hexdigest()


def save_cache(dataset: SequenceDataset, path, key: str = ""):
    lengths = np.array([len(s) for s in dataset.sequences], dtype=np.int64)
    flat = np.concatenate(dataset.sequences) if dataset.sequences else np.zeros(0, np.int64)
    header = json.dumps({"version": CACHE_VERSION, "key": key, "name": dataset.name,
                         "users": dataset.users, "items": dataset.items})
    with open(path, "wb") as f:
        np.savez(f, header=np.frombuffer(header.encode(), dtype=np.uint8), lengths=lengths, flat=flat)


def load_cache(path, key: str | None = None) -> SequenceDataset | None:
    """Load a cache file; returns None when ``key`` is given and does not match."""
    try:
        with np.load(path) as z:
            header = json.loads(z["header"].tobytes().decode())
            lengths, flat = z["lengths"], z["flat"]
    except (OSError, ValueError, KeyError) as exc:
        raise DataFormatError(f"{path}: not a dataset cache ({exc})") from exc
    if header.get("version") != CACHE_VERSION:
        if key is not None:
            return None
        raise DataFormatError(f"{path}: cache version {header.get('version')} != {CACHE_VERSION}")
    if key is not None and header.get("key") != key:
        return None
    seqs = np.split(flat.astype(np.int64), np.cumsum(lengths)[:-1]) if len(lengths) else []
    return SequenceDataset(header["users"], header["items"], list(seqs), header.get("name", "dataset"))


def load_dataset(path, format: str = "csv", cache_path=None) -> SequenceDataset:
    """Raw log -> dataset, reusing ``cache_path`` when its content hash matches."""
    key = source_hash(path, format=format)
    if cache_path is not None and Path(cache_path).exists():
        ds = load_cache(cache_path, key)
        if ds is not None:
            return ds
    ds = preprocess(load_log(path, format), name=Path(path).stem)
    if cache_path is not None:
        save_cache(ds, cache_path, key)
    return ds
