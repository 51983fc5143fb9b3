"""Command-line pipeline: ingest, fit cutoffs, tokenize, train, score, report.

Every subcommand is deterministic given its flags and seeds; runtime failures
exit 1 with a single machine-parseable `error: ...` line on stderr, usage
problems exit 2.
"""

from __future__ import annotations

import functools
import json
import pathlib
import sys

import click
import numpy as np

from . import stats
from .experiments import run_redaction_grid
from .highlight import ansi_report, fit_scale, svg_report
from .infomeasure import (
    apply_thresholds,
    count_features,
    fit_thresholds,
    mean_bits,
    read_scored,
    score_timeline,
    write_scored,
)
from .ingest import parse_tables, read_cohort, write_cohort
from .protocol import external_model
from .seqmodel import BackoffModel, train_backoff
from .synthgen import config_from_toml, generate, write_sidecar
from .tokenizer import CutoffTable, encode, fit_cutoffs, read_timelines, write_timelines
from .vocabulary import Vocabulary


def _fail_cleanly(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except Exception as e:  # noqa: BLE001 - uniform runtime-error contract
            click.echo(f"error: {e}", err=True)
            sys.exit(1)

    return wrapper


def _load_vocab(spec: str) -> Vocabulary:
    return Vocabulary.preset() if spec == "paper" else Vocabulary.load(spec)


def _load_cutoffs(spec: str) -> CutoffTable:
    return CutoffTable.preset() if spec == "paper" else CutoffTable.from_csv(spec)


def _load_model(model_path: str | None, external: str | None):
    if external:
        return external_model(external)
    if model_path is None:
        raise click.UsageError("provide --model or --external")
    blob = json.loads(pathlib.Path(model_path).read_text())
    if blob.get("type") == "external":
        return external_model(blob["endpoint"])
    return BackoffModel.from_dict(blob)


@click.group()
def cli():
    """tokenize clinical event streams and quantify per-token information"""


@cli.command("ingest")
@click.option("--tables", "table_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--min-stay-hours", type=float, default=None, help="drop shorter stays (24 is conventional)")
@_fail_cleanly
def ingest_cmd(table_paths, out_path, min_stay_hours):
    """parse raw CLIF-style tables into the canonical cohort JSONL"""
    cohort = parse_tables(list(table_paths), min_stay_hours=min_stay_hours)
    write_cohort(out_path, cohort)
    click.echo(f"wrote {len(cohort)} hospitalizations to {out_path}")


@cli.command("fit-cutoffs")
@click.option("--in", "in_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--preset", type=click.Choice(["paper"]), default=None)
@_fail_cleanly
def fit_cutoffs_cmd(in_path, out_path, preset):
    """fit decile cutoffs from a training cohort, or export the frozen preset"""
    if preset == "paper":
        table = CutoffTable.preset()
    elif in_path:
        table = fit_cutoffs(read_cohort(in_path))
    else:
        raise click.UsageError("provide --in cohort.jsonl or --preset paper")
    table.to_csv(out_path)
    click.echo(f"wrote {len(table)} categories to {out_path}")


@cli.command("tokenize")
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--cutoffs", default="paper", help="cutoff CSV path or 'paper'")
@click.option("--vocab", default="paper", help="vocabulary file path or 'paper'")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--context-limit", type=int, default=1024, show_default=True)
@_fail_cleanly
def tokenize_cmd(cohort_path, cutoffs, vocab, out_path, context_limit):
    """encode a cohort into integer timelines"""
    vocabulary = _load_vocab(vocab)
    table = _load_cutoffs(cutoffs)
    cohort = read_cohort(cohort_path)
    timelines = [encode(h, vocabulary, table, context_limit) for h in cohort]
    write_timelines(out_path, timelines)
    click.echo(f"wrote {len(timelines)} timelines to {out_path}")


@cli.command("train")
@click.option("--timelines", "timelines_path", type=click.Path(exists=True))
@click.option("--order", type=int, default=4, show_default=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--discount", type=float, default=0.75, show_default=True)
@click.option("--vocab", default="paper")
@click.option("--external", default=None, help="record an external endpoint instead of training")
@click.option("--out", "out_path", required=True, type=click.Path())
@_fail_cleanly
def train_cmd(timelines_path, order, alpha, discount, vocab, external, out_path):
    """train the back-off model, or point downstream commands at a served model"""
    if external:
        pathlib.Path(out_path).write_text(
            json.dumps({"type": "external", "endpoint": external}, sort_keys=True)
        )
        click.echo(f"wrote external-model reference to {out_path}")
        return
    if timelines_path is None:
        raise click.UsageError("provide --timelines or --external")
    timelines = read_timelines(timelines_path)
    model = train_backoff(
        timelines, vocab_size=len(_load_vocab(vocab)), order=order, alpha=alpha, discount=discount
    )
    model.save(out_path)
    click.echo(f"trained order-{order} model on {len(timelines)} timelines -> {out_path}")


@cli.command("score")
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--external", default=None, help="host:port or stdio:<command>")
@click.option("--timelines", "timelines_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--first-hours", type=float, default=None,
              help="fit percentile thresholds on this window and attach flags")
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True), default=None,
              help="use externally fitted thresholds instead of refitting")
@click.option("--vocab", default="paper")
@click.option("--mode", type=click.Choice(["model", "clinical"]), default="model", show_default=True)
@_fail_cleanly
def score_cmd(model_path, external, timelines_path, out_path, first_hours, thresholds_path, vocab, mode):
    """compute per-token and per-event information for every timeline"""
    vocabulary = _load_vocab(vocab)
    model = _load_model(model_path, external)
    timelines = read_timelines(timelines_path)
    scored = [score_timeline(model, t, mode) for t in timelines]
    if thresholds_path is not None:
        thresholds = _read_thresholds(thresholds_path)
    elif first_hours is not None:
        thresholds = fit_thresholds(scored, first_hours)
    else:
        thresholds = None
    if thresholds is not None:
        for s in scored:
            apply_thresholds(s, thresholds)
        meta = {
            "q95_token": thresholds.q95_token,
            "q95_event": thresholds.q95_event,
            "q99_event": thresholds.q99_event,
            "window_hours": first_hours,
        }
        pathlib.Path(str(out_path) + ".thresholds.json").write_text(
            json.dumps(meta, sort_keys=True)
        )
    write_scored(out_path, scored, vocabulary)
    click.echo(f"scored {len(scored)} timelines -> {out_path}")


@cli.command("highlight")
@click.option("--scored", "scored_path", required=True, type=click.Path(exists=True))
@click.option("--id", "hospitalization_id", required=True)
@click.option("--first-n", type=int, default=210, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["ansi", "svg"]), default="ansi", show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
@_fail_cleanly
def highlight_cmd(scored_path, hospitalization_id, first_n, fmt, out_path):
    """render one timeline with tokens shaded by information"""
    records = []
    with open(scored_path) as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    target = next((r for r in records if r["hospitalization_id"] == hospitalization_id), None)
    if target is None:
        raise ValueError(f"hospitalization {hospitalization_id!r} not in {scored_path}")
    scale = fit_scale(read_scored(scored_path))
    render = ansi_report if fmt == "ansi" else svg_report
    text = render(
        target["tokens"],
        target["bits"],
        scale,
        first_n=first_n,
        title=f"{hospitalization_id} (first {min(first_n, len(target['tokens']))} tokens)",
    )
    if out_path:
        pathlib.Path(out_path).write_text(text)
        click.echo(f"wrote {fmt} report to {out_path}")
    else:
        click.echo(text, nl=False)


@cli.command("redact-grid")
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--external", default=None)
@click.option("--outcomes", default="mortality,long_los", show_default=True)
@click.option("--boot", type=int, default=stats.DEFAULT_N_BOOT, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--head-l2", type=float, default=1e-4, show_default=True)
@click.option("--vocab", default="paper")
@click.option("--cutoffs", default="paper")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--markdown", "md_path", default=None, type=click.Path())
@_fail_cleanly
def redact_grid_cmd(
    cohort_path, model_path, external, outcomes, boot, seed, head_l2, vocab, cutoffs, out_path, md_path
):
    """run the truncate/redact/refit grid and emit the results table"""
    grid = run_redaction_grid(
        read_cohort(cohort_path),
        _load_model(model_path, external),
        vocabulary=_load_vocab(vocab),
        cutoffs=_load_cutoffs(cutoffs),
        outcomes=tuple(outcomes.split(",")),
        n_boot=boot,
        seed=seed,
        head_l2=head_l2,
    )
    pathlib.Path(out_path).write_text(grid.to_csv())
    if md_path:
        pathlib.Path(md_path).write_text(grid.to_markdown())
    click.echo(f"wrote {len(grid.rows)} grid rows to {out_path}")


@cli.command("synth")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--sidecar", "sidecar_path", required=True, type=click.Path())
@_fail_cleanly
def synth_cmd(config_path, out_path, sidecar_path):
    """generate a synthetic cohort plus the planted-event sidecar"""
    cohort, sidecar = generate(config_from_toml(config_path))
    write_cohort(out_path, cohort)
    write_sidecar(sidecar_path, sidecar)
    click.echo(
        f"wrote {len(cohort)} hospitalizations to {out_path} "
        f"and {len(sidecar)} planted events to {sidecar_path}"
    )


def _read_thresholds(path):
    from .infomeasure import InfoThresholds

    blob = json.loads(pathlib.Path(path).read_text())
    return InfoThresholds(
        blob["q95_token"], blob["q95_event"], blob["q99_event"], source=str(path)
    )


@cli.command("info-stats")
@click.option("--scored", "scored_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--first-hours", type=float, default=24.0, show_default=True)
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True), default=None,
              help="use externally fitted thresholds instead of refitting")
@_fail_cleanly
def info_stats_cmd(scored_path, out_path, first_hours, thresholds_path):
    """cohort information summary: mean bits, thresholds, per-stay count features"""
    scored = read_scored(scored_path)
    if thresholds_path is not None:
        thresholds = _read_thresholds(thresholds_path)
    else:
        thresholds = fit_thresholds(scored, first_hours)
    lines = ["hospitalization_id,n_tokens,n_events,mean_bits,t_ge95,e_ge95_lt99,e_ge99"]
    for s in scored:
        cf = count_features(s, thresholds, first_hours)
        finite = s.token_bits[np.isfinite(s.token_bits)]
        mb = float(finite.mean()) if finite.size else float("nan")
        lines.append(
            f"{s.timeline.hospitalization_id},{len(s.token_bits)},{len(s.event_bits)},"
            f"{mb:.6f},{cf.t_ge95},{cf.e_ge95_lt99},{cf.e_ge99}"
        )
    pathlib.Path(out_path).write_text("\n".join(lines) + "\n")
    click.echo(f"cohort mean bits per token: {mean_bits(scored):.6f}")
    click.echo(
        f"thresholds (first {first_hours:g}h): q95_token={thresholds.q95_token:.6f} "
        f"q95_event={thresholds.q95_event:.6f} q99_event={thresholds.q99_event:.6f}"
    )
    click.echo(f"wrote per-hospitalization features to {out_path}")


def main():
    cli(prog_name="ehr-surprisal")


if __name__ == "__main__":
    main()
