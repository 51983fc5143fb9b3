"""Sequence-model contract plus a trainable absolute-discounting back-off model.

A model provides next-token conditional distributions (natural-log space) and a
per-prefix representation vector. The built-in back-off model is a counting
model: maximum likelihood for its family, exact and fast at desk scale, with
strictly positive conditionals thanks to discounting and add-alpha unigrams.
"""

from __future__ import annotations

import abc
import collections
import dataclasses
import json
import math
import os
import pathlib
from typing import Iterable, Sequence

import numpy as np

from .tokenizer import Timeline

Pathlike = str | os.PathLike

CONTEXT_WINDOW = 1023  # scoring parity with a 1024-token context


class SequenceModel(abc.ABC):
    """next-token conditional distribution p(x_t | x_<t) plus prefix representation"""

    vocab_size: int
    repr_dim: int

    @abc.abstractmethod
    def log_conditional(self, context: Sequence[int]) -> np.ndarray:
        """natural-log probabilities over the vocabulary given the context"""

    @abc.abstractmethod
    def representation(self, prefix: Sequence[int]) -> np.ndarray:
        """representation vector of the consumed prefix, shape (repr_dim,)"""

    def conditional(self, context: Sequence[int]) -> np.ndarray:
        """probability vector over the vocabulary (sums to 1)"""
        return np.exp(self.log_conditional(context))


def _as_token_arrays(timelines: Iterable[Timeline | Sequence[int]]) -> list[np.ndarray]:
    out = []
    for t in timelines:
        arr = t.tokens if isinstance(t, Timeline) else np.asarray(t, dtype=np.int64)
        out.append(arr)
    return out


# ---------------------------------------------------------------------------
# packing


def pack(
    timelines: Iterable[Timeline | Sequence[int]],
    b: int,
    *,
    pad_id: int,
    width: int = 1024,
) -> list[np.ndarray]:
    """
    pack concatenated timelines into b x width batches in row-major order; the
    final partial row is completed with PAD and the last batch may have fewer
    than b rows; contexts are not reset at timeline joints
    """
    if b < 1:
        raise ValueError(f"batch rows must be >= 1, got {b}")
    arrays = _as_token_arrays(timelines)
    if not arrays:
        return []
    stream = np.concatenate(arrays)
    n_rows = -(-len(stream) // width)
    padded = np.full(n_rows * width, pad_id, dtype=np.int64)
    padded[: len(stream)] = stream
    matrix = padded.reshape(n_rows, width)
    return [matrix[i : i + b] for i in range(0, n_rows, b)]


# ---------------------------------------------------------------------------
# back-off counting model


class BackoffModel(SequenceModel):
    """
    interpolated back-off over k-gram counts, k = 0..order-1, with absolute
    discount D and add-alpha unigrams; every conditional is strictly positive
    """

    def __init__(self, vocab_size: int, order: int, alpha: float, discount: float):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if not 0 < discount <= 1:
            raise ValueError(f"discount must be in (0, 1], got {discount}")
        if alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {alpha}")
        self.vocab_size = vocab_size
        self.repr_dim = vocab_size
        self.order = order
        self.alpha = alpha
        self.discount = discount
        # counts[k]: context tuple of length k -> {token: count}
        self.counts: list[dict[tuple[int, ...], dict[int, int]]] = [
            collections.defaultdict(dict) for _ in range(order)
        ]
        self._unigram_vec: np.ndarray | None = None
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def _count_stream(self, stream: np.ndarray) -> None:
        toks = [int(x) for x in stream]
        for t, x in enumerate(toks):
            for k in range(min(self.order - 1, t) + 1):
                ctx = tuple(toks[t - k : t])
                slot = self.counts[k].setdefault(ctx, {})
                slot[x] = slot.get(x, 0) + 1
        self._unigram_vec = None
        self._cache.clear()

    def _unigram(self) -> np.ndarray:
        uni = np.full(self.vocab_size, self.alpha)
        for tok, c in self.counts[0].get((), {}).items():
            uni[tok] += c
        return uni / uni.sum()

    def _pvec(self, ctx: tuple[int, ...]) -> np.ndarray:
        if not ctx:
            if self._unigram_vec is None:
                self._unigram_vec = self._unigram()
            return self._unigram_vec
        seen = self.counts[len(ctx)].get(ctx)
        if not seen:
            return self._pvec(ctx[1:])
        total = sum(seen.values())
        vec = np.zeros(self.vocab_size)
        for tok, c in seen.items():
            vec[tok] = (c - self.discount) / total
        lam = self.discount * len(seen) / total
        return vec + lam * self._pvec(ctx[1:])

    def log_conditional(self, context: Sequence[int]) -> np.ndarray:
        ctx = tuple(int(x) for x in context[-min(self.order - 1, CONTEXT_WINDOW) :]) if self.order > 1 else ()
        hit = self._cache.get(ctx)
        if hit is None:
            hit = np.log(self._pvec(ctx))
            self._cache[ctx] = hit
        return hit

    def representation(self, prefix: Sequence[int]) -> np.ndarray:
        return self.log_conditional(prefix)

    # -- persistence

    def to_dict(self) -> dict:
        return {
            "type": "backoff",
            "vocab_size": self.vocab_size,
            "order": self.order,
            "alpha": self.alpha,
            "discount": self.discount,
            "counts": [
                {",".join(map(str, ctx)): toks for ctx, toks in sorted(level.items())}
                for level in self.counts
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackoffModel":
        m = cls(d["vocab_size"], d["order"], d["alpha"], d["discount"])
        for k, level in enumerate(d["counts"]):
            for key, toks in level.items():
                ctx = tuple(int(x) for x in key.split(",")) if key else ()
                m.counts[k][ctx] = {int(t): int(c) for t, c in toks.items()}
        return m

    def save(self, path: Pathlike) -> None:
        pathlib.Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: Pathlike) -> "BackoffModel":
        return cls.from_dict(json.loads(pathlib.Path(path).read_text()))


def train_backoff(
    timelines: Iterable[Timeline | Sequence[int]],
    vocab_size: int,
    order: int = 4,
    alpha: float = 0.5,
    discount: float = 0.75,
    *,
    packed_parity: bool = False,
) -> BackoffModel:
    """
    count k-grams over the training timelines in concatenation order; contexts
    reset at timeline boundaries (so duplicating the corpus leaves all
    conditionals unchanged) unless `packed_parity` lets them flow across joints
    as the packed training stream would
    """
    arrays = _as_token_arrays(timelines)
    if not arrays or sum(len(a) for a in arrays) == 0:
        raise ValueError("empty training stream")
    model = BackoffModel(vocab_size, order, alpha, discount)
    if packed_parity:
        model._count_stream(np.concatenate(arrays))
    else:
        for arr in arrays:
            model._count_stream(arr)
    return model


# ---------------------------------------------------------------------------
# fixed-table model (tests, mocks, hand-built distributions)


class TableModel(SequenceModel):
    """model defined by an explicit context -> distribution table with a default"""

    def __init__(
        self,
        vocab_size: int,
        conditionals: dict[tuple[int, ...], Sequence[float]] | None = None,
        default: Sequence[float] | None = None,
    ):
        self.vocab_size = vocab_size
        self.repr_dim = vocab_size
        if default is None:
            default = np.full(vocab_size, 1.0 / vocab_size)
        self._default = self._validate(np.asarray(default, dtype=float))
        self._table = {
            tuple(int(t) for t in ctx): self._validate(np.asarray(dist, dtype=float))
            for ctx, dist in (conditionals or {}).items()
        }

    def _validate(self, dist: np.ndarray) -> np.ndarray:
        if dist.shape != (self.vocab_size,):
            raise ValueError(f"distribution has shape {dist.shape}, expected ({self.vocab_size},)")
        if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError("distribution entries must be >= 0 and sum to 1")
        return dist

    def log_conditional(self, context: Sequence[int]) -> np.ndarray:
        dist = self._table.get(tuple(int(t) for t in context), self._default)
        with np.errstate(divide="ignore"):
            return np.log(dist)

    def representation(self, prefix: Sequence[int]) -> np.ndarray:
        return self.log_conditional(prefix)


# ---------------------------------------------------------------------------
# evaluation


@dataclasses.dataclass(frozen=True)
class CrossEntropyReport:
    bits_per_token: float
    empirical_entropy_bits: float
    kl_bits_per_token: float
    n_tokens: int


def sequence_log2_prob(model: SequenceModel, tokens: Sequence[int]) -> float:
    """log2 of the model's joint probability of the sequence (chain rule)"""
    total = 0.0
    toks = [int(x) for x in tokens]
    for t, x in enumerate(toks):
        logp = model.log_conditional(toks[max(0, t - CONTEXT_WINDOW) : t])
        total += logp[x] / math.log(2)
    return total


def cross_entropy(
    model: SequenceModel,
    timelines: Iterable[Timeline | Sequence[int]],
    *,
    packed_parity: bool = False,
) -> CrossEntropyReport:
    """
    mean bits per token of -log2 p(x_t | x_<t); contexts stay within each
    timeline unless `packed_parity` is set, in which case they flow across
    timeline joints as in the training packing
    """
    arrays = _as_token_arrays(timelines)
    streams = [np.concatenate(arrays)] if packed_parity and arrays else arrays
    total_bits = 0.0
    n_tokens = 0
    for stream in streams:
        total_bits -= sequence_log2_prob(model, stream)
        n_tokens += len(stream)
    bits = total_bits / n_tokens if n_tokens else float("nan")

    # empirical entropy of the held-out multiset of sequences, per token
    freq = collections.Counter(tuple(int(x) for x in a) for a in arrays)
    m = sum(freq.values())
    if m and n_tokens:
        ent_seq = -sum((c / m) * math.log2(c / m) for c in freq.values())
        emp = ent_seq * m / n_tokens
    else:
        emp = float("nan")
    return CrossEntropyReport(bits, emp, bits - emp, n_tokens)
