"""Highlighted-timeline reports: token cells shaded by information content.

The color scale has five emphasis levels anchored at the scored cohort's
50/75/90/95/99th token-bit percentiles; tokens below the median stay plain.
Both emitters are pure functions of their inputs.
"""

from __future__ import annotations

import dataclasses
import html
from typing import Sequence

import numpy as np

from .infomeasure import ScoredTimeline

SCALE_PERCENTILES = (50.0, 75.0, 90.0, 95.0, 99.0)
_ANSI_BG = {1: 226, 2: 220, 3: 214, 4: 208, 5: 196}  # yellow -> red
_SVG_FILL = {
    0: "#f4f4f4",
    1: "#fff3b0",
    2: "#ffd166",
    3: "#ffa94d",
    4: "#ff7043",
    5: "#e63946",
}


@dataclasses.dataclass(frozen=True)
class HighlightScale:
    cutpoints: tuple[float, float, float, float, float]

    def bucket(self, bits: float) -> int:
        """0 = below the median, 5 = at or above the 99th percentile"""
        return int(np.searchsorted(np.asarray(self.cutpoints), bits, side="right"))


def fit_scale(scored: Sequence[ScoredTimeline]) -> HighlightScale:
    pool = np.concatenate([s.token_bits[np.isfinite(s.token_bits)] for s in scored])
    if pool.size == 0:
        raise ValueError("no finite token scores to fit a highlight scale")
    return HighlightScale(tuple(float(np.percentile(pool, q)) for q in SCALE_PERCENTILES))


def ansi_report(
    tokens: Sequence[str],
    bits: Sequence[float],
    scale: HighlightScale,
    *,
    first_n: int = 210,
    per_line: int = 6,
    title: str = "",
) -> str:
    """terminal rendering: one shaded cell per token with its bits"""
    n = min(first_n, len(tokens))
    lines = []
    if title:
        lines.append(title)
    legend = ["legend:"]
    for level, cut in enumerate(scale.cutpoints, start=1):
        legend.append(f"\x1b[30;48;5;{_ANSI_BG[level]}m >= {cut:.2f} \x1b[0m")
    lines.append(" ".join(legend) + " bits")
    row: list[str] = []
    for i in range(n):
        level = scale.bucket(float(bits[i]))
        cell = f"{tokens[i]} {float(bits[i]):.2f}"
        if level:
            cell = f"\x1b[30;48;5;{_ANSI_BG[level]}m {cell} \x1b[0m"
        else:
            cell = f" {cell} "
        row.append(cell)
        if len(row) == per_line:
            lines.append("".join(row))
            row = []
    if row:
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def svg_report(
    tokens: Sequence[str],
    bits: Sequence[float],
    scale: HighlightScale,
    *,
    first_n: int = 210,
    per_line: int = 10,
    title: str = "",
) -> str:
    """simple grid rendering; each cell carries its exact bits in a tooltip"""
    n = min(first_n, len(tokens))
    cell_w, cell_h, pad = 118, 26, 4
    n_rows = -(-n // per_line) if n else 0
    width = per_line * (cell_w + pad) + pad
    height = (n_rows + 1) * (cell_h + pad) + pad + (22 if title else 0)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="10">'
    ]
    y0 = 4
    if title:
        out.append(f'<text x="{pad}" y="16" font-size="13">{html.escape(title)}</text>')
        y0 = 26
    for level, cut in enumerate(scale.cutpoints, start=1):
        x = pad + (level - 1) * (cell_w + pad)
        out.append(
            f'<rect x="{x}" y="{y0}" width="{cell_w}" height="{cell_h}" '
            f'fill="{_SVG_FILL[level]}"/>'
        )
        out.append(
            f'<text x="{x + 4}" y="{y0 + 17}">&#8805; {cut:.2f} bits</text>'
        )
    for i in range(n):
        row, col = divmod(i, per_line)
        x = pad + col * (cell_w + pad)
        y = y0 + (row + 1) * (cell_h + pad)
        level = scale.bucket(float(bits[i]))
        label = tokens[i] if len(tokens[i]) <= 16 else tokens[i][:15] + "…"
        out.append(
            f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" '
            f'fill="{_SVG_FILL[level]}"><title>{html.escape(tokens[i])}: '
            f"{float(bits[i]):.6f} bits</title></rect>"
        )
        out.append(f'<text x="{x + 4}" y="{y + 17}">{html.escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
