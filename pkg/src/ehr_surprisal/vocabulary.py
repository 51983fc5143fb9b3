"""Token vocabulary: a bijection between token strings and contiguous integer ids."""

from __future__ import annotations

import collections
import os
import pathlib
import re
from typing import Iterable

from .presets import PRESET_TOKENS

Pathlike = str | os.PathLike

TL_START = "TL_START"
TL_END = "TL_END"
PAD = "PAD"
TRUNC = "TRUNC"
NONE_TOKEN = "None"
NAN_TOKEN = "nan"

DECILE_TOKENS = tuple(f"Q{i}" for i in range(10))
SPECIAL_TOKENS = (TL_START, TL_END, PAD, TRUNC, NONE_TOKEN, NAN_TOKEN)


class VocabularyError(KeyError):
    """raised for strings or ids that are not in the vocabulary"""


class Vocabulary:
    """
    immutable mapping token string <-> id; ids are contiguous from 0 and follow
    construction order, so a saved vocabulary file (one token per line) round-trips
    """

    def __init__(self, tokens: Iterable[str]):
        self._tokens: tuple[str, ...] = tuple(tokens)
        self._ids: dict[str, int] = {t: i for i, t in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            dupes = [t for t, n in collections.Counter(self._tokens).items() if n > 1]
            raise ValueError(f"duplicate tokens in vocabulary: {dupes}")

    @classmethod
    def preset(cls) -> "Vocabulary":
        """the frozen 208-token vocabulary"""
        return cls(PRESET_TOKENS)

    @classmethod
    def seeded(cls) -> "VocabularyBuilder":
        """builder for fitted vocabularies: deciles + specials first, then first-seen"""
        return VocabularyBuilder()

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def id_of(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise VocabularyError(f"token not in vocabulary: {token!r}") from None

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._tokens):
            raise VocabularyError(f"id not in vocabulary: {idx}")
        return self._tokens[idx]

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def save(self, path: Pathlike) -> None:
        pathlib.Path(path).write_text("\n".join(self._tokens) + "\n")

    @classmethod
    def load(cls, path: Pathlike) -> "Vocabulary":
        lines = pathlib.Path(path).read_text().splitlines()
        return cls([ln for ln in lines if ln != ""])


class VocabularyBuilder:
    """accumulates tokens in first-seen order after the decile and special tokens"""

    def __init__(self):
        self._tokens: list[str] = list(DECILE_TOKENS + SPECIAL_TOKENS)
        self._seen: set[str] = set(self._tokens)

    def add(self, token: str) -> None:
        if token not in self._seen:
            self._seen.add(token)
            self._tokens.append(token)

    def build(self) -> Vocabulary:
        return Vocabulary(self._tokens)


def token_type(token: str) -> str:
    """coarse token family, e.g. 'LAB', 'Q', 'SPECIAL'; used for report group-bys"""
    if token in SPECIAL_TOKENS:
        return "SPECIAL"
    if re.fullmatch(r"Q\d", token):
        return "Q"
    return token.split("_", 1)[0]
