"""Context-aware information of tokens and events, percentile thresholds, counts.

A token's information is -log2 p(x_t | x_<t); an event's information is the sum
over its span, accumulated in natural-log space and converted to bits once. Zero
model probability yields an exact +inf marker; display capping happens only at
the JSONL boundary.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import pathlib
from typing import Iterable, Literal, Sequence

import numpy as np

from .seqmodel import CONTEXT_WINDOW, SequenceModel
from .tokenizer import Timeline, timeline_from_dict
from .vocabulary import Vocabulary

Pathlike = str | os.PathLike

LN2 = math.log(2)
DISPLAY_CAP_BITS = 64.0
WINDOW_HOURS = 24.0


@dataclasses.dataclass
class ScoredTimeline:
    """timeline annotated with per-token and per-event information in bits"""

    timeline: Timeline
    token_bits: np.ndarray
    event_bits: np.ndarray
    token_deltas: np.ndarray | None = None
    token_over_q95: np.ndarray | None = None
    event_over_q95: np.ndarray | None = None
    event_over_q99: np.ndarray | None = None


@dataclasses.dataclass(frozen=True)
class InfoThresholds:
    q95_token: float
    q95_event: float
    q99_event: float
    source: str = ""

    def __post_init__(self):
        if self.q99_event < self.q95_event:
            raise ValueError("q99_event must be >= q95_event")


@dataclasses.dataclass(frozen=True)
class CountFeatures:
    t_ge95: int
    e_ge95_lt99: int
    e_ge99: int

    def as_array(self) -> np.ndarray:
        return np.array([self.t_ge95, self.e_ge95_lt99, self.e_ge99], dtype=float)


def score_tokens(
    model: SequenceModel,
    timeline: Timeline,
    mode: Literal["model", "clinical"] = "model",
) -> np.ndarray:
    """per-token bits; `clinical` mode assigns the deterministic TL_START 0 bits"""
    return _score(model, timeline, mode)[0]


def _score(model, timeline, mode):
    toks = [int(x) for x in timeline.tokens]
    loge = np.empty(len(toks))
    for t, x in enumerate(toks):
        if t == 0 and mode == "clinical":
            loge[0] = 0.0
            continue
        logp = model.log_conditional(toks[max(0, t - CONTEXT_WINDOW) : t])
        loge[t] = logp[x]
    bits = np.where(np.isneginf(loge), np.inf, -loge / LN2)
    # guard -0.0 from p == 1
    return bits + 0.0, loge


def score_timeline(
    model: SequenceModel,
    timeline: Timeline,
    mode: Literal["model", "clinical"] = "model",
) -> ScoredTimeline:
    """score tokens and events in one pass; event bits accumulate in log space"""
    bits, loge = _score(model, timeline, mode)
    ev = np.empty(len(timeline.event_spans))
    for i, (u, v) in enumerate(timeline.event_spans):
        s = loge[u - 1 : v].sum()
        ev[i] = np.inf if np.isneginf(s) else -s / LN2
    return ScoredTimeline(timeline, bits, ev + 0.0)


def score_events(scored: ScoredTimeline) -> np.ndarray:
    """per-span bits as the sum of member token scores"""
    return np.array(
        [scored.token_bits[u - 1 : v].sum() for u, v in scored.timeline.event_spans]
    )


def score_cohort(
    model: SequenceModel,
    timelines: Iterable[Timeline],
    mode: Literal["model", "clinical"] = "model",
) -> list[ScoredTimeline]:
    return [score_timeline(model, t, mode) for t in timelines]


# ---------------------------------------------------------------------------
# windows, thresholds and count features


def _window_masks(scored: ScoredTimeline, hours: float) -> tuple[np.ndarray, np.ndarray]:
    """(token mask, event mask) for the first `hours` after admission, closed boundary"""
    t = scored.timeline
    limit = t.admit_epoch + hours * 3600.0
    token_mask = t.token_times <= limit
    event_mask = np.array(
        [t.token_times[u - 1] <= limit for u, v in t.event_spans], dtype=bool
    )
    return token_mask, event_mask


def fit_thresholds(
    scored_cohort: Sequence[ScoredTimeline],
    restrict_to_first_hours: float = WINDOW_HOURS,
    *,
    min_tokens: int = 100,
    source: str = "",
) -> InfoThresholds:
    """95th percentile of token bits, 95th/99th of event bits within the window"""
    token_pool, event_pool = [], []
    for s in scored_cohort:
        tm, em = _window_masks(s, restrict_to_first_hours)
        token_pool.append(s.token_bits[tm])
        event_pool.append(s.event_bits[em])
    tokens = np.concatenate(token_pool) if token_pool else np.array([])
    events = np.concatenate(event_pool) if event_pool else np.array([])
    if tokens.size < min_tokens:
        raise ValueError(
            f"only {tokens.size} scored tokens in the first "
            f"{restrict_to_first_hours}h window; need >= {min_tokens}"
        )
    q95_event, q99_event = (
        (float(np.percentile(events, 95)), float(np.percentile(events, 99)))
        if events.size
        else (float("nan"), float("nan"))
    )
    return InfoThresholds(float(np.percentile(tokens, 95)), q95_event, q99_event, source)


def count_features(
    scored: ScoredTimeline,
    thresholds: InfoThresholds,
    window_hours: float = WINDOW_HOURS,
) -> CountFeatures:
    """(T>=95, E in [95,99), E>=99) counts within the admission window"""
    tm, em = _window_masks(scored, window_hours)
    tb = scored.token_bits[tm]
    eb = scored.event_bits[em]
    return CountFeatures(
        t_ge95=int(np.sum(tb >= thresholds.q95_token)),
        e_ge95_lt99=int(np.sum((eb >= thresholds.q95_event) & (eb < thresholds.q99_event))),
        e_ge99=int(np.sum(eb >= thresholds.q99_event)),
    )


def apply_thresholds(scored: ScoredTimeline, thresholds: InfoThresholds) -> ScoredTimeline:
    """fill the percentile flag fields in place (whole timeline, not windowed)"""
    scored.token_over_q95 = scored.token_bits >= thresholds.q95_token
    scored.event_over_q95 = scored.event_bits >= thresholds.q95_event
    scored.event_over_q99 = scored.event_bits >= thresholds.q99_event
    return scored


def mean_bits(scored_cohort: Sequence[ScoredTimeline]) -> float:
    """arithmetic mean of token information over the cohort"""
    pool = np.concatenate([s.token_bits for s in scored_cohort])
    if pool.size == 0:
        raise ValueError("empty scored cohort")
    return float(pool.mean())


def mean_predicted_entropy(
    model: SequenceModel,
    timelines: Iterable[Timeline],
    mode: Literal["model", "clinical"] = "model",
) -> float:
    """
    mean over positions of the entropy of the model's predicted distribution;
    an independent estimator of the same entropy rate that mean token bits
    estimates (tower property), useful for validating exact oracles
    """
    total, n = 0.0, 0
    for tl in timelines:
        toks = [int(x) for x in tl.tokens]
        for t in range(len(toks)):
            if t == 0 and mode == "clinical":
                n += 1
                continue
            logp = model.log_conditional(toks[max(0, t - CONTEXT_WINDOW) : t])
            p = np.exp(logp)
            nz = p > 0
            total += float(-(p[nz] * logp[nz]).sum()) / LN2
            n += 1
    return total / n if n else float("nan")


# ---------------------------------------------------------------------------
# scored-timeline JSONL


def scored_to_dict(
    s: ScoredTimeline, vocabulary: Vocabulary, display_cap: float = DISPLAY_CAP_BITS
) -> dict:
    capped = np.minimum(s.token_bits, display_cap)
    d = {
        "hospitalization_id": s.timeline.hospitalization_id,
        "tokens": [vocabulary.token_of(int(i)) for i in s.timeline.tokens],
        "token_ids": [int(i) for i in s.timeline.tokens],
        "token_times": [float(x) for x in s.timeline.token_times],
        "bits": [round(float(b), 6) for b in capped],
        "infinite_tokens": [int(i) for i in np.flatnonzero(np.isinf(s.token_bits))],
        "event_spans": [[int(u), int(v)] for u, v in s.timeline.event_spans],
        "event_bits": [round(float(min(b, display_cap)), 6) for b in s.event_bits],
        "infinite_events": [int(i) for i in np.flatnonzero(np.isinf(s.event_bits))],
        "truncated": bool(s.timeline.truncated),
    }
    if s.token_deltas is not None:
        d["token_deltas"] = [round(float(x), 6) for x in s.token_deltas]
    if s.token_over_q95 is not None:
        d["token_over_q95"] = [bool(x) for x in s.token_over_q95]
        d["event_over_q95"] = [bool(x) for x in s.event_over_q95]
        d["event_over_q99"] = [bool(x) for x in s.event_over_q99]
    return d


def scored_from_dict(d: dict) -> ScoredTimeline:
    tl = timeline_from_dict(
        {
            "hospitalization_id": d["hospitalization_id"],
            "tokens": d["token_ids"],
            "token_times": d["token_times"],
            "event_spans": d["event_spans"],
            "truncated": d.get("truncated", False),
        }
    )
    bits = np.asarray(d["bits"], dtype=float)
    bits[np.asarray(d.get("infinite_tokens", []), dtype=int)] = np.inf
    ev = np.asarray(d["event_bits"], dtype=float)
    ev[np.asarray(d.get("infinite_events", []), dtype=int)] = np.inf
    s = ScoredTimeline(tl, bits, ev)
    if "token_deltas" in d:
        s.token_deltas = np.asarray(d["token_deltas"], dtype=float)
    if "token_over_q95" in d:
        s.token_over_q95 = np.asarray(d["token_over_q95"], dtype=bool)
        s.event_over_q95 = np.asarray(d["event_over_q95"], dtype=bool)
        s.event_over_q99 = np.asarray(d["event_over_q99"], dtype=bool)
    return s


def write_scored(
    path: Pathlike,
    scored: Iterable[ScoredTimeline],
    vocabulary: Vocabulary,
    display_cap: float = DISPLAY_CAP_BITS,
) -> None:
    with pathlib.Path(path).open("w") as fh:
        for s in scored:
            fh.write(json.dumps(scored_to_dict(s, vocabulary, display_cap), sort_keys=True) + "\n")


def read_scored(path: Pathlike) -> list[ScoredTimeline]:
    out = []
    with pathlib.Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(scored_from_dict(json.loads(line)))
    return out
