"""Shared fixtures: synthetic timelines produced through the primary CLI only."""

import pathlib
import subprocess

import pytest

from logit_server.model import save_checkpoint
from logit_server.train import load_timelines, train_reference


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """tokenized timelines generated via the `ehr-surprisal` pipeline"""
    root = tmp_path_factory.mktemp("corpus")
    config = root / "gen.toml"
    config.write_text('[generator]\npreset = "planted"\nn_patients = 150\nseed = 9\n')
    cohort = root / "cohort.jsonl"
    timelines = root / "timelines.jsonl"
    subprocess.run(
        ["ehr-surprisal", "synth", "--config", str(config), "--out", str(cohort),
         "--sidecar", str(root / "planted.jsonl")],
        check=True, capture_output=True,
    )
    subprocess.run(
        ["ehr-surprisal", "tokenize", "--cohort", str(cohort), "--out", str(timelines)],
        check=True, capture_output=True,
    )
    tokens = load_timelines(timelines)
    assert len(tokens) >= 150
    return root, timelines, tokens


@pytest.fixture(scope="session")
def trained(corpus, tmp_path_factory):
    """a small checkpoint trained on the first 70% of the corpus"""
    root, _timelines, tokens = corpus
    split = int(0.7 * len(tokens))
    model, history = train_reference(
        tokens[:split], epochs=3, seed=0, width=128, batch_rows=8, log=lambda _msg: None
    )
    ckpt = tmp_path_factory.mktemp("ckpt") / "reference.pt"
    save_checkpoint(model, ckpt)
    held_out = root / "held_out.jsonl"
    with pathlib.Path(_timelines).open() as src, held_out.open("w") as dst:
        for i, line in enumerate(src):
            if i >= split:
                dst.write(line)
    return model, history, ckpt, held_out
