"""Training loop: pack timelines row-major and minimize next-token cross-entropy."""

from __future__ import annotations

import json
import math
import pathlib

import numpy as np
import torch

from .model import ModelConfig, TinyCausalLM

PAD_ID = 12  # the vocabulary's PAD slot in the frozen 208-token listing


def load_timelines(path) -> list[list[int]]:
    """token sequences from the timelines JSONL interface (`tokens` field)"""
    out = []
    with pathlib.Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append([int(x) for x in json.loads(line)["tokens"]])
    return out


def pack_rows(timelines: list[list[int]], width: int, pad_id: int = PAD_ID) -> np.ndarray:
    """concatenate and reshape row-major; the final partial row is PAD-filled"""
    stream = np.concatenate([np.asarray(t, dtype=np.int64) for t in timelines])
    n_rows = -(-len(stream) // width)
    padded = np.full(n_rows * width, pad_id, dtype=np.int64)
    padded[: len(stream)] = stream
    return padded.reshape(n_rows, width)


def train_reference(
    timelines: list[list[int]],
    *,
    vocab_size: int = 208,
    epochs: int = 3,
    seed: int = 0,
    width: int = 128,
    batch_rows: int = 8,
    d_model: int = 64,
    n_layers: int = 2,
    n_heads: int = 2,
    lr: float = 3e-3,
    log=print,
) -> tuple[TinyCausalLM, list[float]]:
    """returns the trained model and the per-epoch training loss in bits/token"""
    torch.manual_seed(seed)
    cfg = ModelConfig(
        vocab_size=vocab_size, d_model=d_model, n_heads=n_heads, n_layers=n_layers,
        d_ff=2 * d_model, max_len=max(width, 1024),
    )
    model = TinyCausalLM(cfg)
    rows = torch.from_numpy(pack_rows(timelines, width))
    bos = torch.full((rows.shape[0], 1), model.bos_id, dtype=torch.long)
    inputs = torch.cat([bos, rows[:, :-1]], dim=1)
    targets = rows

    opt = torch.optim.AdamW(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    history: list[float] = []
    for epoch in range(1, epochs + 1):
        model.train()
        order = rng.permutation(rows.shape[0])
        total_nll, total_tok = 0.0, 0
        for start in range(0, len(order), batch_rows):
            idx = order[start : start + batch_rows]
            logits = model(inputs[idx])
            loss = torch.nn.functional.cross_entropy(
                logits.reshape(-1, vocab_size), targets[idx].reshape(-1)
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_nll += float(loss.detach()) * targets[idx].numel()
            total_tok += targets[idx].numel()
        bits = total_nll / total_tok / math.log(2)
        history.append(bits)
        log(f"epoch {epoch}: {bits:.3f} bits/token (train)")
    model.eval()
    return model, history
