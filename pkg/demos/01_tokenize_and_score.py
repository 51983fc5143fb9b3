#!/usr/bin/env python3
"""Walk one synthetic hospitalization from raw events to a highlighted timeline.

Generates a tiny cohort, encodes it with the frozen vocabulary and cutoffs,
trains the back-off model, scores every token, and prints the first stay with
its most informative tokens shaded.
"""

import numpy as np

from ehr_surprisal import (
    Vocabulary,
    ansi_report,
    fit_scale,
    generate,
    mean_bits,
    planted_config,
    score_cohort,
    train_backoff,
)
from ehr_surprisal.infomeasure import fit_thresholds
from ehr_surprisal.tokenizer import CutoffTable, decode, encode_cohort

vocab = Vocabulary.preset()
cutoffs = CutoffTable.preset()

config = planted_config(n_patients=150, seed=7)
cohort, planted = generate(config)
print(f"generated {len(cohort)} hospitalizations, {len(planted)} planted surprises")

timelines = encode_cohort(cohort, vocab, cutoffs)
lengths = [len(t) for t in timelines]
print(f"timeline lengths: median {int(np.median(lengths))}, max {max(lengths)}")
print("example prefix:", decode(timelines[0], vocab)[:6])

model = train_backoff(timelines[: len(timelines) // 2], vocab_size=len(vocab), order=4)
scored = score_cohort(model, timelines[len(timelines) // 2 :])
print(f"\nmean information: {mean_bits(scored):.2f} bits per token")

thresholds = fit_thresholds(scored)
print(
    f"24h percentile thresholds: token q95 = {thresholds.q95_token:.2f} bits, "
    f"event q95 = {thresholds.q95_event:.2f}, event q99 = {thresholds.q99_event:.2f}"
)

scale = fit_scale(scored)
s = scored[0]
print()
print(
    ansi_report(
        [vocab.token_of(int(i)) for i in s.timeline.tokens],
        s.token_bits,
        scale,
        first_n=42,
        title=f"hospitalization {s.timeline.hospitalization_id}",
    )
)
