"""Category-value tokenization of hospitalization records into integer timelines.

Each numeric observation becomes a (category token, decile token) pair; decile
cutoffs are fitted on training data or loaded from the frozen preset. A timeline
is TL_START, five admission-prefix tokens, the clinical events in time order,
then the discharge token and TL_END. Tokens sharing a timestamp form an event.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
import os
import pathlib
from typing import Iterable, Sequence

import numpy as np

from .ingest import Hospitalization, IngestError
from .vocabulary import NAN_TOKEN, NONE_TOKEN, TL_END, TL_START, TRUNC, Vocabulary
from .presets import PRESET_CUTOFFS

Pathlike = str | os.PathLike

PREFIX_LEN = 6  # TL_START + race, ethnicity, sex, age decile, admission type
AGE_CATEGORY = "age_at_admission"

_CATVAL_PREFIX = {"labs": "LAB", "vitals": "VTL", "medications": "MED"}


class TokenizationError(ValueError):
    """raised when a record cannot be encoded with the given vocabulary/cutoffs"""


def normalize(text: str) -> str:
    return text.strip().lower().replace(" ", "_")


# ---------------------------------------------------------------------------
# cutoffs


class CutoffTable:
    """per-category nine-element non-decreasing decile cutoff vectors"""

    def __init__(self, cutoffs: dict[str, Sequence[float]]):
        self._cutoffs: dict[str, np.ndarray] = {}
        for name, values in cutoffs.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (9,):
                raise ValueError(f"category {name!r}: expected 9 cutoffs, got {arr.shape}")
            if not np.all(np.diff(arr) >= 0):
                raise ValueError(f"category {name!r}: cutoffs must be non-decreasing")
            self._cutoffs[name] = arr

    @classmethod
    def preset(cls) -> "CutoffTable":
        return cls(PRESET_CUTOFFS)

    def __contains__(self, category: str) -> bool:
        return category in self._cutoffs

    def __len__(self) -> int:
        return len(self._cutoffs)

    def __getitem__(self, category: str) -> np.ndarray:
        try:
            return self._cutoffs[category]
        except KeyError:
            raise TokenizationError(f"no cutoffs fitted for category {category!r}") from None

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(self._cutoffs)

    def to_csv(self, path: Pathlike) -> None:
        lines = ["category," + ",".join(f"C{i}" for i in range(1, 10))]
        for name, arr in self._cutoffs.items():
            lines.append(name + "," + ",".join(repr(float(v)) for v in arr))
        pathlib.Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: Pathlike) -> "CutoffTable":
        out = {}
        lines = pathlib.Path(path).read_text().splitlines()
        for i, line in enumerate(lines[1:], start=2):
            if line.strip() == "":
                continue
            parts = line.split(",")
            if len(parts) != 10:
                raise IngestError(f"malformed cutoff row at {path}:{i}")
            out[parts[0]] = [float(x) for x in parts[1:]]
        return cls(out)


def bin_value(value: float, cutoffs: np.ndarray) -> int:
    """decile bin: (-inf,C1)->0, [C1,C2)->1, ..., [C9,inf)->9"""
    if not math.isfinite(value):
        raise TokenizationError(f"cannot bin non-finite value {value!r}")
    return int(np.searchsorted(cutoffs, value, side="right"))


def category_token_name(table_kind: str, category: str, value) -> str:
    """the vocabulary string naming this observation's category"""
    cat = normalize(category)
    if table_kind in _CATVAL_PREFIX:
        return f"{_CATVAL_PREFIX[table_kind]}_{cat}"
    if table_kind == "assessments":
        return f"ASMT_cat_{cat}" if isinstance(value, str) else f"ASMT_{cat}"
    raise TokenizationError(f"table {table_kind!r} is not category-value tokenized")


def fit_cutoffs(
    cohort: Iterable[Hospitalization], categories: Sequence[str] | None = None
) -> CutoffTable:
    """
    empirical decile cutoffs (linear-interpolated percentiles 10..90) for every
    numeric category in the training cohort, plus age at admission
    """
    values: dict[str, list[float]] = {}
    for h in cohort:
        if h.age_at_admission is not None:
            values.setdefault(AGE_CATEGORY, []).append(float(h.age_at_admission))
        for e in h.events:
            if e.table_kind in _CATVAL_PREFIX or e.table_kind == "assessments":
                if isinstance(e.value, float) and math.isfinite(e.value):
                    name = category_token_name(e.table_kind, e.category, e.value)
                    values.setdefault(name, []).append(e.value)
    wanted = list(values) if categories is None else list(categories)
    empty = [c for c in wanted if not values.get(c)]
    if empty:
        raise TokenizationError(f"no numeric observations for categories: {sorted(empty)}")
    return CutoffTable(
        {c: np.percentile(np.asarray(values[c]), np.arange(10, 91, 10)) for c in wanted}
    )


# ---------------------------------------------------------------------------
# timelines


@dataclasses.dataclass
class Timeline:
    """integer token sequence with per-token times and event spans (1-based inclusive)"""

    hospitalization_id: str
    tokens: np.ndarray  # int64
    token_times: np.ndarray  # float64 epoch seconds, non-decreasing
    event_spans: list[tuple[int, int]]
    truncated: bool = False

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def admit_epoch(self) -> float:
        return float(self.token_times[0])

    def span_token_indices(self, span: tuple[int, int]) -> range:
        u, v = span
        return range(u - 1, v)


def compute_event_spans(
    token_times: np.ndarray, n_tokens: int, truncated: bool
) -> list[tuple[int, int]]:
    """maximal contemporaneous runs strictly between the prefix and the suffix"""
    start = PREFIX_LEN  # 0-based index of first event token
    end = n_tokens - (1 if truncated else 2)  # 0-based exclusive
    spans: list[tuple[int, int]] = []
    i = start
    while i < end:
        j = i + 1
        while j < end and token_times[j] == token_times[i]:
            j += 1
        spans.append((i + 1, j))  # 1-based inclusive
        i = j
    return spans


def event_spans(timeline: Timeline) -> list[tuple[int, int]]:
    return compute_event_spans(timeline.token_times, len(timeline), timeline.truncated)


def _event_token_names(e, cutoffs: CutoffTable) -> list[str]:
    if e.table_kind in ("labs", "vitals", "medications", "assessments"):
        cat_name = category_token_name(e.table_kind, e.category, e.value)
        if e.value is None:
            return [cat_name, NAN_TOKEN if not cat_name.startswith("ASMT_cat_") else NONE_TOKEN]
        if isinstance(e.value, str):
            return [cat_name, f"ASMT_val_{normalize(e.value)}"]
        return [cat_name, f"Q{bin_value(e.value, cutoffs[cat_name])}"]
    if e.table_kind == "transfers":
        return [f"ADT_{normalize(e.category)}"]
    if e.table_kind == "respiratory":
        # the literal "None" marks absent mode/device and is a vocabulary string
        mode = NONE_TOKEN if e.category in (None, "", NONE_TOKEN) else normalize(e.category)
        device = e.value if isinstance(e.value, str) else None
        device = NONE_TOKEN if device in (None, "", NONE_TOKEN) else normalize(device)
        return [f"RESP_mode_{mode}", f"RESP_devc_{device}"]
    if e.table_kind == "positioning":
        return [f"POSN_{normalize(e.category)}"]
    raise TokenizationError(f"cannot encode events from table {e.table_kind!r}")


def encode(
    h: Hospitalization,
    vocabulary: Vocabulary,
    cutoffs: CutoffTable,
    context_limit: int = 1024,
) -> Timeline:
    """encode one hospitalization; truncates to `context_limit` tokens with TRUNC"""
    if context_limit < PREFIX_LEN + 2:
        raise ValueError(f"context_limit {context_limit} too small")
    names: list[str] = [TL_START]
    race = normalize(h.demographics.race) if h.demographics.race else "unknown"
    ethn = normalize(h.demographics.ethnicity) if h.demographics.ethnicity else "unknown"
    if not h.demographics.sex:
        raise TokenizationError(f"hospitalization {h.id}: missing sex")
    if h.age_at_admission is None:
        raise TokenizationError(f"hospitalization {h.id}: missing age_at_admission")
    if not h.admission_type:
        raise TokenizationError(f"hospitalization {h.id}: missing admission_type")
    names += [
        f"RACE_{race}",
        f"ETHN_{ethn}",
        f"SEX_{normalize(h.demographics.sex)}",
        f"Q{bin_value(float(h.age_at_admission), cutoffs[AGE_CATEGORY])}",
        f"ADMN_{normalize(h.admission_type)}",
    ]
    admit = h.admit_time.timestamp()
    times: list[float] = [admit] * PREFIX_LEN

    for e in h.events:
        try:
            toks = _event_token_names(e, cutoffs)
        except TokenizationError as err:
            raise TokenizationError(
                f"hospitalization {h.id}, event at {e.timestamp.isoformat()} "
                f"({e.table_kind}/{e.category}): {err}"
            ) from None
        names += toks
        times += [e.timestamp.timestamp()] * len(toks)

    dcat = normalize(h.discharge_category) if h.discharge_category else "missing"
    names += [f"DSCG_{dcat}", TL_END]
    times += [h.discharge_time.timestamp()] * 2

    try:
        ids = [vocabulary.id_of(n) for n in names]
    except KeyError:
        bad = next(n for n in names if n not in vocabulary)
        pos = names.index(bad)
        raise TokenizationError(
            f"hospitalization {h.id}: token {bad!r} (position {pos + 1}) not in vocabulary"
        ) from None

    truncated = len(ids) > context_limit
    if truncated:
        ids = ids[: context_limit - 1] + [vocabulary.id_of(TRUNC)]
        times = times[: context_limit - 1] + [times[context_limit - 2]]

    tokens = np.asarray(ids, dtype=np.int64)
    token_times = np.asarray(times, dtype=float)
    spans = compute_event_spans(token_times, len(tokens), truncated)
    return Timeline(h.id, tokens, token_times, spans, truncated)


def encode_cohort(
    cohort: Iterable[Hospitalization],
    vocabulary: Vocabulary,
    cutoffs: CutoffTable,
    context_limit: int = 1024,
) -> list[Timeline]:
    return [encode(h, vocabulary, cutoffs, context_limit) for h in cohort]


def fit_vocabulary(cohort: Iterable[Hospitalization], cutoffs: CutoffTable) -> Vocabulary:
    """
    vocabulary for a training cohort: decile and special tokens first, then
    every token string the encoder would emit, in first-seen order
    """
    builder = Vocabulary.seeded()
    for h in cohort:
        race = normalize(h.demographics.race) if h.demographics.race else "unknown"
        ethn = normalize(h.demographics.ethnicity) if h.demographics.ethnicity else "unknown"
        if h.demographics.sex:
            builder.add(f"SEX_{normalize(h.demographics.sex)}")
        if h.admission_type:
            builder.add(f"ADMN_{normalize(h.admission_type)}")
        builder.add(f"RACE_{race}")
        builder.add(f"ETHN_{ethn}")
        for e in h.events:
            for name in _event_token_names(e, cutoffs):
                builder.add(name)
        dcat = normalize(h.discharge_category) if h.discharge_category else "missing"
        builder.add(f"DSCG_{dcat}")
    return builder.build()


def decode(tokens: Timeline | Sequence[int], vocabulary: Vocabulary) -> list[str]:
    ids = tokens.tokens if isinstance(tokens, Timeline) else tokens
    return [vocabulary.token_of(int(i)) for i in ids]


# ---------------------------------------------------------------------------
# timeline JSONL


def timeline_to_dict(t: Timeline) -> dict:
    return {
        "hospitalization_id": t.hospitalization_id,
        "tokens": [int(x) for x in t.tokens],
        "token_times": [float(x) for x in t.token_times],
        "event_spans": [[int(u), int(v)] for u, v in t.event_spans],
        "truncated": bool(t.truncated),
    }


def timeline_from_dict(d: dict) -> Timeline:
    return Timeline(
        hospitalization_id=d["hospitalization_id"],
        tokens=np.asarray(d["tokens"], dtype=np.int64),
        token_times=np.asarray(d["token_times"], dtype=float),
        event_spans=[(int(u), int(v)) for u, v in d["event_spans"]],
        truncated=bool(d.get("truncated", False)),
    )


def write_timelines(path: Pathlike, timelines: Iterable[Timeline]) -> None:
    with pathlib.Path(path).open("w") as fh:
        for t in timelines:
            fh.write(json.dumps(timeline_to_dict(t), sort_keys=True) + "\n")


def read_timelines(path: Pathlike) -> list[Timeline]:
    out = []
    with pathlib.Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(timeline_from_dict(json.loads(line)))
    return out


def epoch_to_datetime(epoch: float) -> dt.datetime:
    return dt.datetime.fromtimestamp(epoch, tz=dt.timezone.utc)
