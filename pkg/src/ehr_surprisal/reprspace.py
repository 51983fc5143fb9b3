"""Representation-space geometry along a timeline.

Tracks the model's prefix representation R(x_{1:t}) and the per-token jump
Delta_t = ||R(x_{1:t}) - R(x_{1:t-1})||, plus per-event path lengths and net
displacements. Streaming mode keeps only the previous vector.
"""

from __future__ import annotations

import dataclasses
import io
from typing import Literal, Sequence

import numpy as np

from .infomeasure import ScoredTimeline
from .seqmodel import SequenceModel
from .tokenizer import Timeline
from .vocabulary import Vocabulary, token_type
from . import stats


@dataclasses.dataclass
class ReprTrace:
    """per-token representation deltas; vectors retained unless built streaming"""

    deltas: np.ndarray  # deltas[0] = 0 by definition
    dim: int
    vectors: np.ndarray | None = None  # (T, dim) when retained


def trace(model: SequenceModel, timeline: Timeline, *, streaming: bool = False) -> ReprTrace:
    toks = [int(x) for x in timeline.tokens]
    deltas = np.zeros(len(toks))
    vectors = None if streaming else np.empty((len(toks), model.repr_dim))
    prev: np.ndarray | None = None
    for t in range(1, len(toks) + 1):
        vec = np.asarray(model.representation(toks[:t]), dtype=float)
        if vec.shape != (model.repr_dim,):
            raise ValueError(
                f"representation dimension drift: got {vec.shape}, expected ({model.repr_dim},)"
            )
        if prev is not None:
            deltas[t - 1] = float(np.linalg.norm(vec - prev))
        if vectors is not None:
            vectors[t - 1] = vec
        prev = vec
    return ReprTrace(deltas, model.repr_dim, vectors)


def path_length(tr: ReprTrace, span: tuple[int, int]) -> float:
    """sum of deltas over the 1-based inclusive span"""
    u, v = span
    if not 1 <= u <= v <= len(tr.deltas):
        raise ValueError(f"span {span} outside timeline of length {len(tr.deltas)}")
    return float(tr.deltas[u - 1 : v].sum())


def net_displacement(tr: ReprTrace, span: tuple[int, int]) -> float:
    """distance between the representations at the span's end and just before it"""
    if tr.vectors is None:
        raise ValueError("net_displacement requires stored vectors (non-streaming trace)")
    u, v = span
    if not 2 <= u <= v <= len(tr.deltas):
        raise ValueError(f"span {span} needs a predecessor token")
    return float(np.linalg.norm(tr.vectors[v - 1] - tr.vectors[u - 2]))


def attach_deltas(scored: ScoredTimeline, tr: ReprTrace) -> ScoredTimeline:
    scored.token_deltas = tr.deltas
    return scored


def info_delta_regression(
    scored: Sequence[ScoredTimeline],
    traces: Sequence[ReprTrace],
    level: Literal["token", "event"] = "token",
) -> tuple[float, float, float]:
    """
    OLS of representation movement on informativeness: token level regresses
    Delta_t on token bits, event level regresses span path length on event bits;
    returns (slope, intercept, R^2)
    """
    xs, ys = [], []
    for s, tr in zip(scored, traces):
        if level == "token":
            finite = np.isfinite(s.token_bits)
            xs.append(s.token_bits[finite])
            ys.append(tr.deltas[finite])
        elif level == "event":
            for bits, span in zip(s.event_bits, s.timeline.event_spans):
                if np.isfinite(bits):
                    xs.append([bits])
                    ys.append([path_length(tr, span)])
        else:
            raise ValueError(f"unknown level {level!r}")
    x = np.concatenate(xs) if xs else np.array([])
    y = np.concatenate(ys) if ys else np.array([])
    if x.size < 3:
        raise ValueError(f"need >= 3 points for the regression, got {x.size}")
    return stats.ols_fit(x, y)


def token_type_summary(
    scored: Sequence[ScoredTimeline],
    traces: Sequence[ReprTrace],
    vocabulary: Vocabulary,
) -> list[tuple[str, int, float, float]]:
    """per token-type (count, mean bits, mean delta), the usual scatter axes"""
    sums: dict[str, list[float]] = {}
    for s, tr in zip(scored, traces):
        for tok, bits, delta in zip(s.timeline.tokens, s.token_bits, tr.deltas):
            if not np.isfinite(bits):
                continue
            row = sums.setdefault(token_type(vocabulary.token_of(int(tok))), [0, 0.0, 0.0])
            row[0] += 1
            row[1] += bits
            row[2] += delta
    return [
        (name, int(n), total_bits / n, total_delta / n)
        for name, (n, total_bits, total_delta) in sorted(sums.items())
    ]


def trace_csv(scored: ScoredTimeline, tr: ReprTrace, vocabulary: Vocabulary) -> str:
    """per-token export: t, token, bits, delta"""
    buf = io.StringIO()
    buf.write("t,token,bits,delta\n")
    for t, (tok, bits, delta) in enumerate(
        zip(scored.timeline.tokens, scored.token_bits, tr.deltas), start=1
    ):
        buf.write(f"{t},{vocabulary.token_of(int(tok))},{bits:.6f},{delta:.6f}\n")
    return buf.getvalue()


def token_type_summary_csv(rows: list[tuple[str, int, float, float]]) -> str:
    buf = io.StringIO()
    buf.write("token_type,n,mean_bits,mean_delta\n")
    for name, n, mb, md in rows:
        buf.write(f"{name},{n},{mb:.6f},{md:.6f}\n")
    return buf.getvalue()
