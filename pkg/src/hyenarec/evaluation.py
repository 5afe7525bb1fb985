"""Full-catalog ranking: Recall@k, NDCG@k and the leave-one-out evaluation driver."""
from __future__ import annotations

import csv
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SequenceDataset, make_batch, stage_users
from .errors import DataError, ParameterError

DEFAULT_KS = (10, 20)


def rank_target(scores, target: int, exclude=()) -> int:
    """1-based rank of ``target``; equal scores rank the lower item index first."""
    z = np.asarray(scores, dtype=np.float64)
    exclude = set(int(e) for e in exclude)
    if target in exclude:
        raise ParameterError(f"target {target} is in the exclusion set")
    keep = np.ones(z.shape[0], dtype=bool)
    if exclude:
        keep[list(exclude)] = False
    keep[target] = False
    zt = z[target]
    idx = np.arange(z.shape[0])
    ahead = (z > zt) | ((z == zt) & (idx < target))
    return 1 + int(np.count_nonzero(ahead & keep))


def rank_targets(scores: np.ndarray, targets: np.ndarray, exclude_mask: np.ndarray | None = None) -> np.ndarray:
    """Vectorized :func:`rank_target` over rows; ``exclude_mask`` [B, V] marks removed items."""
    z = np.asarray(scores, dtype=np.float64)
    b, v = z.shape
    rows = np.arange(b)
    zt = z[rows, targets][:, None]
    idx = np.arange(v)[None, :]
    ahead = (z > zt) | ((z == zt) & (idx < targets[:, None]))
    if exclude_mask is not None:
        if exclude_mask[rows, targets].any():
            raise ParameterError("a target is in its exclusion set")
        ahead &= ~exclude_mask
    return 1 + ahead.sum(axis=1)


def recall_at_k(rank, k: int):
    return (np.asarray(rank) <= k).astype(np.float64) if np.ndim(rank) else float(rank <= k)


def ndcg_at_k(rank, k: int):
    r = np.asarray(rank, dtype=np.float64)
    out = np.where(r <= k, 1.0 / np.log2(r + 1.0), 0.0)
    return out if np.ndim(rank) else float(out)


@dataclass
class RankResult:
    ranks: np.ndarray
    ks: tuple[int, ...]
    recall: dict[int, float] = field(default_factory=dict)
    ndcg: dict[int, float] = field(default_factory=dict)
    loss: float = float("nan")

    @classmethod
    def from_ranks(cls, ranks, ks=DEFAULT_KS, loss: float = float("nan")) -> RankResult:
        ranks = np.asarray(ranks, dtype=np.int64)
        ks = tuple(ks)
        return cls(ranks, ks,
                   {k: float(recall_at_k(ranks, k).mean()) for k in ks},
                   {k: float(ndcg_at_k(ranks, k).mean()) for k in ks}, loss)

    @property
    def num_users(self) -> int:
        return len(self.ranks)

    def metrics(self) -> dict[str, float]:
        out = {}
        for k in self.ks:
            out[f"recall@{k}"] = self.recall[k]
            out[f"ndcg@{k}"] = self.ndcg[k]
        return out


def _log_softmax_nll(z: np.ndarray, targets: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    return lse - z[np.arange(len(targets)), targets]


def evaluate(model, dataset: SequenceDataset, stage: str = "test", ks=DEFAULT_KS, *,
             mask_seen: bool = True, batch_size: int = 256, L_max: int | None = None,
             users=None) -> RankResult:
    """Score the full catalog for every user at ``stage`` and aggregate metrics.

    ``model`` needs ``score(batch) -> [B, V]`` and, unless ``L_max`` is
    given, ``config.max_len``. With ``mask_seen`` the items of the input
    history are removed from the candidates, except the target itself.
    """
    if stage not in ("valid", "test"):
        raise ParameterError(f"evaluation stage must be valid or test, got {stage!r}")
    if max(ks) < 1:
        raise ParameterError("cutoffs must be >= 1")
    L_max = model.config.max_len if L_max is None else L_max
    users = stage_users(dataset, stage) if users is None else np.asarray(users)
    if len(users) == 0:
        raise DataError(f"no users with a {stage} example")
    ranks, losses = [], []
    finite = True
    for start in range(0, len(users), batch_size):
        batch = make_batch(dataset, users[start:start + batch_size], L_max, stage)
        z = np.asarray(model.score(batch), dtype=np.float64)
        excl = None
        if mask_seen:
            excl = np.zeros(z.shape, dtype=bool)
            for r, u in enumerate(batch.users):
                hist = dataset.sequences[u][:len(dataset.sequences[u]) - (1 if stage == "test" else 2)]
                excl[r, hist] = True
            excl[np.arange(len(batch)), batch.targets] = False
        ranks.append(rank_targets(z, batch.targets, excl))
        if finite and np.isfinite(z).all():
            losses.append(_log_softmax_nll(z, batch.targets))
        else:
            finite = False
    ranks = np.concatenate(ranks)
    loss = float(np.concatenate(losses).mean()) if finite else float("nan")
    return RankResult.from_ranks(ranks, ks, loss)


class PopularityScorer:
    """Scores every item by its count in the training prefixes."""

    def __init__(self, dataset: SequenceDataset, max_len: int):
        counts = np.zeros(dataset.num_items)
        for s in dataset.sequences:
            np.add.at(counts, s[:-2], 1.0)
        self.counts = counts
        self.config = type("Cfg", (), {"max_len": max_len})()

    def score(self, batch) -> np.ndarray:
        return np.broadcast_to(self.counts, (len(batch), len(self.counts)))


class RandomScorer:
    def __init__(self, num_items: int, max_len: int, seed: int = 0):
        self.num_items = num_items
        self.rng = np.random.default_rng(seed)
        self.config = type("Cfg", (), {"max_len": max_len})()

    def score(self, batch) -> np.ndarray:
        return self.rng.random((len(batch), self.num_items))


def git_rev() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


RESULT_FIELDS = ("dataset", "stage", "metric", "k", "value", "num_users", "seed", "git_rev")


def write_results(path, result: RankResult, dataset: str, stage: str, seed: int):
    rev = git_rev()
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(RESULT_FIELDS)
        for k in result.ks:
            for metric, table in (("recall", result.recall), ("ndcg", result.ndcg)):
                w.writerow([dataset, stage, metric, k, f"{table[k]:.6f}", result.num_users, seed, rev])
