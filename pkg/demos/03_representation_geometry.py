#!/usr/bin/env python3
"""Relate informativeness to movement in representation space.

Traces the model's prefix representation along each timeline, regresses the
per-token jump on token information and the per-event path length on event
information, and prints the per-token-type averages (the usual scatter axes).
"""

from ehr_surprisal import generate, planted_config, score_cohort, trace, train_backoff
from ehr_surprisal.reprspace import info_delta_regression, token_type_summary
from ehr_surprisal.tokenizer import CutoffTable, encode_cohort
from ehr_surprisal.vocabulary import Vocabulary

vocab = Vocabulary.preset()
cutoffs = CutoffTable.preset()

cohort, _ = generate(planted_config(n_patients=120, seed=13))
timelines = encode_cohort(cohort, vocab, cutoffs)
model = train_backoff(timelines, vocab_size=len(vocab), order=4)

scored = score_cohort(model, timelines)
traces = [trace(model, t) for t in timelines]

for level in ("token", "event"):
    slope, intercept, r2 = info_delta_regression(scored, traces, level)
    print(f"{level:5s} level: jump ~ {slope:.3f} * bits + {intercept:.3f}   (R^2 = {r2:.3f})")

print("\ntoken type     n      mean bits   mean jump")
for name, n, mb, md in token_type_summary(scored, traces, vocab):
    print(f"{name:10s} {n:7d} {mb:10.3f} {md:11.3f}")
