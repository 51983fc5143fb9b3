"""Redaction experiment: 24-hour truncation, event ranking, redacted variants,
representation features, prognostic heads, and the bootstrap-tested results grid.

For each of the 12 redaction plans (top/bottom/random x 10/20/30/40 percent) plus
the original, a logistic head is trained per outcome on the training split's
representations and evaluated on the test split with ROC-AUC, PR-AUC and Brier,
95% percentile bootstrap CIs, and a one-sided exchangeability p-value against
the original variant.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import io
from typing import Iterable, Sequence

import numpy as np

from .ingest import Hospitalization, split_cohort
from .infomeasure import ScoredTimeline, score_timeline
from .seqmodel import SequenceModel
from .tokenizer import (
    PREFIX_LEN,
    CutoffTable,
    Timeline,
    compute_event_spans,
    encode,
)
from .vocabulary import Vocabulary
from . import stats

ICU_LOCATION = "icu"
WINDOW_HOURS = 24.0
PERCENTAGES = (10, 20, 30, 40)
METHODS = ("top", "bottom", "random")
OUTCOMES = ("mortality", "long_los")


def _subseed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint32)[0])


def outcome_label(h: Hospitalization, outcome: str) -> bool:
    if outcome == "mortality":
        return h.outcome_inpatient_mortality
    if outcome == "long_los":
        return h.outcome_long_los
    raise ValueError(f"unknown outcome {outcome!r}")


def filter_icu_24h(
    cohort: Iterable[Hospitalization], hours: float = WINDOW_HOURS
) -> list[Hospitalization]:
    """keep hospitalizations with an ICU transfer within `hours` of admission"""
    out = []
    for h in cohort:
        limit = h.admit_time + dt.timedelta(hours=hours)
        for e in h.events:
            if e.table_kind == "transfers" and e.category == ICU_LOCATION and e.timestamp <= limit:
                out.append(h)
                break
    return out


def truncate_24h(timeline: Timeline, hours: float = WINDOW_HOURS) -> Timeline:
    """
    prefix of the timeline containing the admission prefix and every event token
    arriving within `hours` of admission (closed boundary); discharge, TL_END and
    TRUNC markers are dropped and the 1024 cap is preserved
    """
    limit = timeline.admit_epoch + hours * 3600.0
    body_end = len(timeline) - (1 if timeline.truncated else 2)
    keep = PREFIX_LEN
    for i in range(PREFIX_LEN, body_end):
        if timeline.token_times[i] <= limit:
            keep = i + 1
        else:
            break
    keep = min(keep, 1024)
    tokens = timeline.tokens[:keep].copy()
    times = timeline.token_times[:keep].copy()
    spans = [(u, v) for u, v in timeline.event_spans if v <= keep]
    return Timeline(timeline.hospitalization_id, tokens, times, spans, truncated=False)


@dataclasses.dataclass(frozen=True)
class RedactionPlan:
    method: str  # top | bottom | random
    percentage: int  # one of 10, 20, 30, 40
    seed: int = 0  # used by the random method only

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown redaction method {self.method!r}")
        if self.percentage not in PERCENTAGES:
            raise ValueError(f"percentage must be one of {PERCENTAGES}, got {self.percentage}")


def redaction_order(event_bits: np.ndarray, method: str, seed: int = 0) -> list[int]:
    """fixed removal order; the first k entries are removed for any percentage"""
    m = len(event_bits)
    if method == "top":
        return sorted(range(m), key=lambda i: (-event_bits[i], i))
    if method == "bottom":
        return sorted(range(m), key=lambda i: (event_bits[i], -i))
    if method == "random":
        return list(np.random.default_rng(seed).permutation(m))
    raise ValueError(f"unknown redaction method {method!r}")


def redact(timeline: Timeline, event_bits: np.ndarray, plan: RedactionPlan) -> Timeline:
    """drop floor(m * pct / 100) whole events by the plan's ranking"""
    spans = timeline.event_spans
    m = len(spans)
    if len(event_bits) != m:
        raise ValueError(f"{len(event_bits)} event scores for {m} events")
    k = (m * plan.percentage) // 100
    removed = set(redaction_order(np.asarray(event_bits, dtype=float), plan.method, plan.seed)[:k])
    keep_mask = np.ones(len(timeline), dtype=bool)
    for i in sorted(removed):
        u, v = spans[i]
        keep_mask[u - 1 : v] = False
    tokens = timeline.tokens[keep_mask]
    times = timeline.token_times[keep_mask]
    new_spans = compute_event_spans(times, len(tokens), timeline.truncated)
    return Timeline(timeline.hospitalization_id, tokens, times, new_spans, timeline.truncated)


@dataclasses.dataclass
class PrognosticDataset:
    variant: str
    ids: list[str]
    features: np.ndarray  # (n, d)
    y_mortality: np.ndarray
    y_long_los: np.ndarray

    def labels(self, outcome: str) -> np.ndarray:
        return self.y_mortality if outcome == "mortality" else self.y_long_los


def extract_features(
    model: SequenceModel,
    timelines: Sequence[Timeline],
    cohort_by_id: dict[str, Hospitalization],
    variant: str = "original",
) -> PrognosticDataset:
    """one representation vector per hospitalization plus outcome labels"""
    feats = np.empty((len(timelines), model.repr_dim))
    y_m = np.empty(len(timelines), dtype=bool)
    y_l = np.empty(len(timelines), dtype=bool)
    ids = []
    for i, t in enumerate(timelines):
        vec = np.asarray(model.representation([int(x) for x in t.tokens]), dtype=float)
        if vec.shape != (model.repr_dim,):
            raise ValueError(f"representation dimension {vec.shape} != ({model.repr_dim},)")
        feats[i] = vec
        h = cohort_by_id[t.hospitalization_id]
        y_m[i] = h.outcome_inpatient_mortality
        y_l[i] = h.outcome_long_los
        ids.append(t.hospitalization_id)
    return PrognosticDataset(variant, ids, feats, y_m, y_l)


# ---------------------------------------------------------------------------
# the grid


@dataclasses.dataclass(frozen=True)
class RedactionCell:
    outcome: str
    method: str  # "original" for the unredacted row
    percentage: int | None
    n_test: int
    roc_auc: float
    roc_ci: tuple[float, float]
    roc_p: float | None
    pr_auc: float
    pr_ci: tuple[float, float]
    pr_p: float | None
    brier: float
    brier_ci: tuple[float, float]
    brier_p: float | None

    @property
    def variant(self) -> str:
        return "original" if self.method == "original" else f"{self.method}_{self.percentage}"

    @property
    def stars(self) -> str:
        if self.roc_p is None:
            return ""
        for threshold, mark in ((0.001, "***"), (0.01, "**"), (0.05, "*")):
            if self.roc_p < threshold:
                return mark
        return ""


@dataclasses.dataclass
class GridResult:
    rows: list[RedactionCell]
    n_boot: int
    seed: int

    def variants(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.variant not in seen:
                seen.append(r.variant)
        return seen

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            "outcome,method,pct,n_test,"
            "roc_auc,roc_lo,roc_hi,roc_p,pr_auc,pr_lo,pr_hi,pr_p,"
            "brier,brier_lo,brier_hi,brier_p,stars,n_boot,seed\n"
        )
        for r in self.rows:
            cells = [
                r.outcome,
                r.method,
                "" if r.percentage is None else str(r.percentage),
                str(r.n_test),
            ]
            for point, ci, p in (
                (r.roc_auc, r.roc_ci, r.roc_p),
                (r.pr_auc, r.pr_ci, r.pr_p),
                (r.brier, r.brier_ci, r.brier_p),
            ):
                cells += [f"{point:.6f}", f"{ci[0]:.6f}", f"{ci[1]:.6f}"]
                cells.append("" if p is None else f"{p:.6f}")
            cells += [r.stars, str(self.n_boot), str(self.seed)]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_markdown(self) -> str:
        buf = io.StringIO()
        for outcome in dict.fromkeys(r.outcome for r in self.rows):
            buf.write(f"### {outcome}\n\n")
            buf.write("| method | pct | ROC-AUC | p | PR-AUC | p | Brier | p |\n")
            buf.write("|---|---|---|---|---|---|---|---|\n")
            for r in self.rows:
                if r.outcome != outcome:
                    continue
                pct = "---" if r.percentage is None else str(r.percentage)
                cells = [r.method, pct]
                for point, ci, p in (
                    (r.roc_auc, r.roc_ci, r.roc_p),
                    (r.pr_auc, r.pr_ci, r.pr_p),
                    (r.brier, r.brier_ci, r.brier_p),
                ):
                    half = (ci[1] - ci[0]) / 2.0
                    entry = f"{point:.3f} ± {half:.3f}"
                    if point == r.roc_auc and r.stars:
                        entry += f" {r.stars}"
                    cells.append(entry)
                    cells.append(_format_p(p))
                buf.write("| " + " | ".join(cells) + " |\n")
            buf.write("\n")
        return buf.getvalue()


def _format_p(p: float | None) -> str:
    if p is None or p > 0.1:
        return ""
    if p < 0.001:
        return "<0.001"
    return f"{p:.3f}"


def grid_variants(percentages: Sequence[int] = PERCENTAGES) -> list[tuple[str, int | None]]:
    out: list[tuple[str, int | None]] = [("original", None)]
    for method in METHODS:
        for pct in percentages:
            out.append((method, pct))
    return out


def _check_labels(y: np.ndarray, outcome: str, split: str) -> None:
    if y.min() == y.max():
        raise ValueError(f"outcome {outcome!r} has a single class in the {split} split")


def build_variant_datasets(
    model: SequenceModel,
    truncated: Sequence[Timeline],
    scored: Sequence[ScoredTimeline],
    cohort_by_id: dict[str, Hospitalization],
    seed: int,
    percentages: Sequence[int] = PERCENTAGES,
) -> dict[str, PrognosticDataset]:
    """features for the original and every redacted variant of one split"""
    datasets = {}
    for vi, (method, pct) in enumerate(grid_variants(percentages)):
        if method == "original":
            variant_tls = list(truncated)
        else:
            plan_seed = _subseed(seed, 999, vi)
            variant_tls = [
                redact(t, s.event_bits, RedactionPlan(method, pct, plan_seed))
                for t, s in zip(truncated, scored)
            ]
        name = "original" if method == "original" else f"{method}_{pct}"
        datasets[name] = extract_features(model, variant_tls, cohort_by_id, name)
    return datasets


def run_redaction_grid(
    cohort: Sequence[Hospitalization],
    model: SequenceModel,
    *,
    vocabulary: Vocabulary,
    cutoffs: CutoffTable,
    outcomes: Sequence[str] = OUTCOMES,
    percentages: Sequence[int] = PERCENTAGES,
    n_boot: int = stats.DEFAULT_N_BOOT,
    seed: int = 0,
    head_l2: float = 1e-4,
    window_hours: float = WINDOW_HOURS,
) -> GridResult:
    """the full §-style protocol on an in-memory cohort; deterministic in `seed`"""
    icu = filter_icu_24h(cohort, window_hours)
    if len(icu) < 20:
        raise ValueError(f"only {len(icu)} hospitalizations after the ICU filter")
    train, _val, test = split_cohort(icu, (0.7, 0.1, 0.2), seed=_subseed(seed, 0))
    by_id = {h.id: h for h in icu}

    split_data: dict[str, dict[str, PrognosticDataset]] = {}
    for split_name, part in (("train", train), ("test", test)):
        truncated = [
            truncate_24h(encode(h, vocabulary, cutoffs), window_hours) for h in part
        ]
        scored = [score_timeline(model, t) for t in truncated]
        split_data[split_name] = build_variant_datasets(
            model, truncated, scored, by_id, seed, percentages
        )

    rows: list[RedactionCell] = []
    variant_list = grid_variants(percentages)
    original_probs: dict[str, np.ndarray] = {}
    for oi, outcome in enumerate(outcomes):
        for vi, (method, pct) in enumerate(variant_list):
            name = "original" if method == "original" else f"{method}_{pct}"
            ds_train = split_data["train"][name]
            ds_test = split_data["test"][name]
            y_train = ds_train.labels(outcome).astype(float)
            y_test = ds_test.labels(outcome).astype(int)
            _check_labels(y_train, outcome, "train")
            _check_labels(y_test, outcome, "test")
            head = stats.logistic_fit(ds_train.features, y_train, l2=head_l2)
            probs = stats.predict_proba(head, ds_test.features)
            if name == "original":
                original_probs[outcome] = probs

            point = {
                "roc": stats.roc_auc(probs, y_test),
                "pr": stats.pr_auc(probs, y_test),
                "brier": stats.brier(probs, y_test),
            }
            cis = {}
            pvals: dict[str, float | None] = {}
            for mi, metric in enumerate(("roc_auc", "pr_auc", "brier")):
                key = metric.split("_")[0]
                cis[key] = stats.bootstrap_ci(
                    probs, y_test, metric, n_boot, _subseed(seed, 1, oi, vi, mi)
                )
                if name == "original":
                    pvals[key] = None
                else:
                    pvals[key] = stats.paired_metric_pvalue(
                        original_probs[outcome],
                        probs,
                        y_test,
                        metric,
                        n_boot,
                        _subseed(seed, 2, oi, vi, mi),
                        greater_is_better=(metric != "brier"),
                    )
            rows.append(
                RedactionCell(
                    outcome=outcome,
                    method=method,
                    percentage=pct,
                    n_test=len(y_test),
                    roc_auc=point["roc"],
                    roc_ci=cis["roc"],
                    roc_p=pvals["roc"],
                    pr_auc=point["pr"],
                    pr_ci=cis["pr"],
                    pr_p=pvals["pr"],
                    brier=point["brier"],
                    brier_ci=cis["brier"],
                    brier_p=pvals["brier"],
                )
            )
    return GridResult(rows, n_boot, seed)


# ---------------------------------------------------------------------------
# count-feature prognosis (the percentile-count analogue)


@dataclasses.dataclass
class CountFeatureRegression:
    outcome: str
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    z: np.ndarray
    pvalues: np.ndarray
    converged: bool
    n: int


def count_feature_matrix(
    scored: Sequence[ScoredTimeline],
    thresholds,
    window_hours: float = WINDOW_HOURS,
) -> np.ndarray:
    from .infomeasure import count_features

    return np.array(
        [count_features(s, thresholds, window_hours).as_array() for s in scored]
    )


def count_feature_regression(
    scored: Sequence[ScoredTimeline],
    hospitalizations: Sequence[Hospitalization],
    thresholds,
    outcome: str = "mortality",
    *,
    l2: float = 0.0,
    window_hours: float = WINDOW_HOURS,
) -> CountFeatureRegression:
    """logistic regression of the outcome on (T>=95, E in [95,99), E>=99)"""
    if len(scored) != len(hospitalizations):
        raise ValueError("scored timelines and hospitalizations must align")
    X = count_feature_matrix(scored, thresholds, window_hours)
    y = np.array([outcome_label(h, outcome) for h in hospitalizations], dtype=float)
    fit = stats.logistic_fit(X, y, l2=l2)
    return CountFeatureRegression(
        outcome=outcome,
        names=("intercept", "t_ge95", "e_ge95_lt99", "e_ge99"),
        coef=fit.coef,
        se=fit.se,
        z=fit.z,
        pvalues=fit.pvalues,
        converged=fit.converged,
        n=len(y),
    )
