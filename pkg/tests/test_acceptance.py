"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest -s tests/test_acceptance.py -v` to see the per-criterion lines.
The heavyweight synthetic cohorts are session-scoped fixtures shared across
criteria; every tolerance is pinned here, not configurable.
"""

import collections
import dataclasses
import hashlib
import itertools
import math

import numpy as np
import pytest

import ehr_surprisal.stats as stats
import ehr_surprisal.synthgen as sg
from ehr_surprisal.experiments import (
    _subseed,
    count_feature_regression,
    extract_features,
    filter_icu_24h,
    run_redaction_grid,
    truncate_24h,
)
from ehr_surprisal.infomeasure import fit_thresholds, score_timeline, score_tokens
from ehr_surprisal.ingest import split_cohort
from ehr_surprisal.presets import PRESET_TOKENS
from ehr_surprisal.reprspace import net_displacement, path_length, trace
from ehr_surprisal.seqmodel import cross_entropy, sequence_log2_prob, train_backoff
from ehr_surprisal.tokenizer import CutoffTable, Timeline, bin_value, encode, encode_cohort
from ehr_surprisal.vocabulary import Vocabulary

VOCAB = Vocabulary.preset()
CUTOFFS = CutoffTable.preset()


def report(name: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS")


@pytest.fixture(scope="session")
def thousand_timelines():
    """~1000 synthetic timelines plus the back-off and oracle models"""
    cfg = sg.planted_config(850, seed=71)
    cohort, _ = sg.generate(cfg)
    timelines = encode_cohort(cohort, VOCAB, CUTOFFS)
    assert len(timelines) >= 1000
    backoff = train_backoff(timelines[:700], vocab_size=len(VOCAB), order=4)
    return timelines, backoff, sg.oracle_model(cfg), cfg


@pytest.fixture(scope="session")
def planted_cohort():
    """>= 2000 hospitalizations with outcomes driven by planted surprises"""
    cfg = sg.planted_config(1800, seed=21)
    cohort, sidecar = sg.generate(cfg)
    assert len(cohort) >= 2000
    return cfg, cohort, sidecar


def test_additivity_eq3(thousand_timelines):
    """event information equals the sum of its token information, both models"""
    timelines, backoff, oracle, _ = thousand_timelines
    checked = 0
    for model in (backoff, oracle):
        for t in timelines[:1000]:
            s = score_timeline(model, t)
            sums = np.array([s.token_bits[u - 1 : v].sum() for u, v in t.event_spans])
            finite = np.isfinite(s.event_bits)
            assert np.all(np.abs(s.event_bits[finite] - sums[finite]) < 1e-9)
            assert np.all(finite)  # on-support sequences never hit zero probability
            checked += finite.size
    assert checked > 10_000
    report("additivity (event bits = sum of token bits, 1e-9, both models)")


def test_chain_rule_oracle_equivalence():
    """exhaustive joint enumeration at vocab <= 4, length <= 6"""
    rng = np.random.default_rng(5)
    V, T = 4, 6
    model = train_backoff([list(rng.integers(0, V, size=90))], vocab_size=V, order=3)
    total = 0.0
    for seq in itertools.product(range(V), repeat=T):
        log2_joint = sequence_log2_prob(model, seq)
        total += 2.0**log2_joint
        timeline = Timeline("x", np.array(seq), np.arange(T, dtype=float), [])
        bits = score_tokens(model, timeline)
        assert abs(bits.sum() + log2_joint) < 1e-9
    assert abs(total - 1.0) < 1e-9
    report("chain-rule oracle equivalence (joint sums to 1; bits match joint)")


def test_tokenizer_golden():
    """preset vocabulary and cutoffs match the frozen source tables"""
    assert len(PRESET_TOKENS) == 208
    assert len(set(PRESET_TOKENS)) == 208
    listing_sha = hashlib.sha256("\n".join(PRESET_TOKENS).encode()).hexdigest()
    assert listing_sha == "f2df502afe41ffeeabdfa9f4ded23ab0b7bf48a2025b91961434854f9ba0567c"
    by_family = collections.Counter(
        "Q" if t.startswith("Q") and len(t) == 2 else t.split("_", 1)[0] for t in PRESET_TOKENS
    )
    assert by_family["LAB"] == 45 and by_family["MED"] == 46 and by_family["ASMT"] == 32
    assert by_family["VTL"] == 9 and by_family["RESP"] == 18 and by_family["DSCG"] == 12

    age = CUTOFFS["age_at_admission"]
    assert tuple(age) == (30.0, 40.0, 49.0, 55.0, 61.0, 66.0, 71.0, 77.0, 84.0)
    assert bin_value(25.0, age) == 0
    assert bin_value(30.0, age) == 1
    assert bin_value(90.0, age) == 9
    assert bin_value(9.0, CUTOFFS["LAB_hemoglobin"]) == 3
    assert len(CUTOFFS) == 113
    report("tokenizer golden (208-token vocabulary, preset cutoffs, worked bins)")


def test_triangle_inequality(thousand_timelines):
    """net displacement never exceeds path length, both models"""
    timelines, backoff, oracle, _ = thousand_timelines
    n_events = 0
    for model in (oracle, backoff):
        for t in timelines[:1000]:
            tr = trace(model, t)
            for span in t.event_spans:
                net = net_displacement(tr, span)
                path = path_length(tr, span)
                assert net <= path * (1.0 + 1e-9) + 1e-12
                n_events += 1
    assert n_events > 10_000
    report("triangle inequality (net displacement <= path length, 1e-9 relative)")


@pytest.fixture(scope="session")
def small_grid_setup():
    cfg = dataclasses.replace(
        sg.planted_config(300, seed=3), mortality_intercept=-2.2, llos_intercept=-1.2
    ).validate()
    cohort, _ = sg.generate(cfg)
    oracle = sg.oracle_model(cfg)
    kwargs = dict(vocabulary=VOCAB, cutoffs=CUTOFFS, n_boot=120, seed=11, head_l2=0.5)
    return cohort, oracle, kwargs


def test_redaction_structure(small_grid_setup):
    """grid shape, star convention, drop-0% identity, byte-identical reruns"""
    cohort, oracle, kwargs = small_grid_setup
    grid = run_redaction_grid(cohort, oracle, **kwargs)
    assert grid.variants() == [
        "original",
        "top_10", "top_20", "top_30", "top_40",
        "bottom_10", "bottom_20", "bottom_30", "bottom_40",
        "random_10", "random_20", "random_30", "random_40",
    ]
    per_outcome = collections.Counter(r.outcome for r in grid.rows)
    assert per_outcome == {"mortality": 13, "long_los": 13}
    for r in grid.rows:
        if r.roc_p is None:
            assert r.stars == ""
        elif r.roc_p < 0.001:
            assert r.stars == "***"
        elif r.roc_p < 0.01:
            assert r.stars == "**"
        elif r.roc_p < 0.05:
            assert r.stars == "*"
        else:
            assert r.stars == ""

    again = run_redaction_grid(cohort, oracle, **kwargs)
    assert grid.to_csv() == again.to_csv()
    assert grid.to_markdown() == again.to_markdown()

    # the original row reproduces the direct pipeline bit for bit
    icu = filter_icu_24h(cohort)
    train, _v, test = split_cohort(icu, (0.7, 0.1, 0.2), seed=_subseed(11, 0))
    by_id = {h.id: h for h in icu}
    parts = {}
    for name, part in (("train", train), ("test", test)):
        truncated = [truncate_24h(encode(h, VOCAB, CUTOFFS)) for h in part]
        parts[name] = extract_features(oracle, truncated, by_id, "original")
    for oi, outcome in enumerate(("mortality", "long_los")):
        head = stats.logistic_fit(
            parts["train"].features, parts["train"].labels(outcome).astype(float), l2=0.5
        )
        probs = stats.predict_proba(head, parts["test"].features)
        y = parts["test"].labels(outcome).astype(int)
        row = next(r for r in grid.rows if r.outcome == outcome and r.method == "original")
        assert row.roc_auc == stats.roc_auc(probs, y)
        assert row.pr_auc == stats.pr_auc(probs, y)
        assert row.brier == stats.brier(probs, y)
        assert row.roc_ci == stats.bootstrap_ci(probs, y, "roc_auc", 120, _subseed(11, 1, oi, 0, 0))
    report("redaction structure (13 variants x 2 outcomes, stars, identity, determinism)")


def test_directional_redaction(planted_cohort):
    """top-40% redaction hurts significantly; bottom-10% is inert"""
    cfg, cohort, _ = planted_cohort
    oracle = sg.oracle_model(cfg)
    grid = run_redaction_grid(
        cohort, oracle, vocabulary=VOCAB, cutoffs=CUTOFFS, n_boot=2000, seed=5, head_l2=0.5
    )
    rows = {(r.outcome, r.variant): r for r in grid.rows}
    for outcome in ("mortality", "long_los"):
        original = rows[(outcome, "original")]
        top40 = rows[(outcome, "top_40")]
        bottom10 = rows[(outcome, "bottom_10")]
        assert top40.roc_auc < original.roc_auc
        assert top40.roc_p < 0.05
        assert abs(bottom10.roc_auc - original.roc_auc) < 0.02
    report("directional redaction (top-40 drops with p < 0.05; bottom-10 within 0.02)")


def test_count_feature_analogue(planted_cohort):
    """all three percentile-count coefficients positive with p < 0.01"""
    cfg, cohort, _ = planted_cohort
    oracle = sg.oracle_model(cfg)
    scored = [score_timeline(oracle, t) for t in encode_cohort(cohort, VOCAB, CUTOFFS)]
    thresholds = fit_thresholds(scored)
    for outcome in ("mortality", "long_los"):
        reg = count_feature_regression(scored, cohort, thresholds, outcome)
        assert np.all(reg.coef[1:] > 0)
        assert np.all(reg.pvalues[1:] < 0.01)
    report("percentile-count prognosis (three positive coefficients, Wald p < 0.01)")


def test_count_feature_null_calibration():
    """under the null, each coefficient rejects at 5% within 0.05 +/- 0.03"""
    n_seeds = 200
    hits = np.zeros(3)
    for seed in range(n_seeds):
        cfg = sg.null_config(110, seed=seed)
        cohort, _ = sg.generate(cfg)
        oracle = sg.oracle_model(cfg)
        scored = [score_timeline(oracle, t) for t in encode_cohort(cohort, VOCAB, CUTOFFS)]
        reg = count_feature_regression(scored, cohort, fit_thresholds(scored), "mortality")
        hits += reg.pvalues[1:] < 0.05
    fractions = hits / n_seeds
    assert np.all(fractions >= 0.02) and np.all(fractions <= 0.08), fractions
    report(f"null calibration (rejection fractions {np.round(fractions, 3)} in 0.05 +/- 0.03)")


def test_statistics_oracles():
    """brute-force ROC equality, FD gradients, p-value bounds, identity test"""
    rng = np.random.default_rng(0)

    def brute_roc(scores, labels):
        pos = scores[labels == 1]
        neg = scores[labels == 0]
        wins = sum(1.0 if p > n else (0.5 if p == n else 0.0) for p in pos for n in neg)
        return wins / (len(pos) * len(neg))

    for _ in range(200):
        m = int(rng.integers(2, 51))
        scores = np.round(rng.normal(size=m), 2)
        labels = rng.integers(0, 2, size=m)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert stats.roc_auc(scores, labels) == brute_roc(scores, labels)

    # analytic gradient vs central finite differences, 1e-5 relative
    X = rng.normal(size=(50, 3))
    Z = np.column_stack([np.ones(50), X])
    y = rng.integers(0, 2, size=50).astype(float)
    beta = rng.normal(scale=0.4, size=4)
    penal = np.array([0.0, 1.0, 1.0, 1.0])
    _, grad = stats.logistic_objective(beta, Z, y, 0.2, penal)
    for j in range(4):
        e = np.zeros(4)
        e[j] = 1e-5
        fd = (
            stats.logistic_objective(beta + e, Z, y, 0.2, penal)[0]
            - stats.logistic_objective(beta - e, Z, y, 0.2, penal)[0]
        ) / 2e-5
        assert abs(fd - grad[j]) <= 1e-5 * max(1.0, abs(grad[j]))

    # bootstrap p bounds and the identical-classifier test
    n = 199
    ps = []
    for seed in range(100):
        srng = np.random.default_rng(1000 + seed)
        scores = srng.normal(size=40)
        other = srng.normal(size=40)
        labels = srng.integers(0, 2, size=40)
        labels[:2] = [0, 1]
        p = stats.paired_auc_pvalue(scores, other, labels, n=n, seed=seed)
        assert 1.0 / (n + 1) <= p <= 1.0
        ps.append(stats.paired_auc_pvalue(scores, scores, labels, n=n, seed=seed))
    assert float(np.mean(ps)) >= 0.45
    report("statistics oracles (exact ROC, FD gradient, p bounds, identity test)")


def test_backoff_sanity(thousand_timelines):
    """beats uniform held out; training bits non-increasing in order"""
    timelines, _, _, _ = thousand_timelines
    train_set, held = timelines[:700], timelines[700:]
    model = train_backoff(train_set, vocab_size=len(VOCAB), order=4)
    held_bits = cross_entropy(model, held).bits_per_token
    assert held_bits < math.log2(208)

    previous = math.inf
    for order in (1, 2, 3, 4):
        m = train_backoff(train_set, vocab_size=len(VOCAB), order=order)
        bits = cross_entropy(m, train_set).bits_per_token
        assert bits <= previous + 1e-12
        previous = bits
    report("back-off sanity (held-out bits < log2(208); order-monotone training bits)")
