#!/usr/bin/env python3
"""Reproduce the redaction experiment's structure on a synthetic cohort.

Outcomes here are driven by planted surprise events, so dropping the most
informative events should visibly hurt the prognostic heads while dropping the
least informative ones should not. Uses the exact process oracle as the model;
swap in a trained back-off model or an external provider to compare.
"""

from ehr_surprisal import generate, oracle_model, planted_config, run_redaction_grid
from ehr_surprisal.tokenizer import CutoffTable
from ehr_surprisal.vocabulary import Vocabulary

config = planted_config(n_patients=700, seed=21)
cohort, _ = generate(config)
print(f"cohort of {len(cohort)} hospitalizations")

grid = run_redaction_grid(
    cohort,
    oracle_model(config),
    vocabulary=Vocabulary.preset(),
    cutoffs=CutoffTable.preset(),
    n_boot=1000,
    seed=5,
    head_l2=0.5,
)
print(grid.to_markdown())
