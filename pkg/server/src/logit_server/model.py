"""A small causal transformer language model over integer token sequences.

Two pre-norm attention blocks by default, sized to train on a laptop CPU in
minutes. The "representation" of a prefix is the final hidden state at its last
position; next-token distributions are exact log-softmax in float64 so wire
normalization holds to much better than 1e-6.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import torch
from torch import nn


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 208
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 1024


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = nn.MultiheadAttention(cfg.d_model, cfg.n_heads, batch_first=True)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.d_model, cfg.d_ff), nn.GELU(), nn.Linear(cfg.d_ff, cfg.d_model)
        )

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        a, _ = self.attn(h, h, h, attn_mask=mask, need_weights=False)
        x = x + a
        return x + self.mlp(self.ln2(x))


class TinyCausalLM(nn.Module):
    """causal LM with an internal start-of-sequence slot so empty contexts work"""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.bos_id = cfg.vocab_size  # internal only, never on the wire
        self.tok_emb = nn.Embedding(cfg.vocab_size + 1, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_len + 1, cfg.d_model)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layers))
        self.ln_out = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size)

    def hidden_states(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, T) token ids -> (B, T, d) final hidden states (pre-head)"""
        _, t = tokens.shape
        if t > self.cfg.max_len + 1:
            raise ValueError(f"sequence length {t} exceeds {self.cfg.max_len + 1}")
        pos = torch.arange(t, device=tokens.device)
        x = self.tok_emb(tokens) + self.pos_emb(pos)[None, :, :]
        mask = torch.triu(torch.ones(t, t, dtype=torch.bool, device=tokens.device), diagonal=1)
        for block in self.blocks:
            x = block(x, mask)
        return self.ln_out(x)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, T) -> (B, T, V) logits for the next token at every position"""
        return self.head(self.hidden_states(tokens))

    def _with_bos(self, context) -> torch.Tensor:
        ids = [self.bos_id] + [int(x) for x in context]
        return torch.tensor([ids], dtype=torch.long)

    @torch.no_grad()
    def next_logprobs(self, context) -> np.ndarray:
        """natural-log next-token distribution after consuming `context`"""
        self.eval()
        logits = self.forward(self._with_bos(context))[0, -1]
        return torch.log_softmax(logits.double(), dim=-1).numpy()

    @torch.no_grad()
    def representation(self, prefix) -> np.ndarray:
        """final hidden state at the last position of the prefix"""
        self.eval()
        h = self.hidden_states(self._with_bos(prefix))
        return h[0, -1].double().numpy()


def save_checkpoint(model: TinyCausalLM, path) -> None:
    torch.save(
        {"config": dataclasses.asdict(model.cfg), "state_dict": model.state_dict()}, path
    )


def load_checkpoint(path) -> TinyCausalLM:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = TinyCausalLM(ModelConfig(**blob["config"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model
