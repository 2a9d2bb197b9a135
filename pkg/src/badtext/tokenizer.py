"""Whitespace tokenizer shared by the lexicon scorer and the defense detector.

Tokens are lowercased and stripped of surrounding punctuation, but each one
keeps the character span of its stripped form in the original text so the
defense can splice replacement words back in place.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_WORD_RE = re.compile(r"\S+")

# Stripped from token edges only; interior punctuation (don't, 4.5) survives.
_EDGE_CHARS = frozenset(".,!?;:\"'()")


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    """Split ``text`` on whitespace into lowercased, edge-stripped tokens.

    Tokens that are punctuation-only disappear. ``text[t.start:t.end]`` is
    always the original spelling of ``t.text`` (same characters, original
    case).
    """
    tokens: list[Token] = []
    for match in _WORD_RE.finditer(text):
        chunk = match.group()
        lo, hi = 0, len(chunk)
        while lo < hi and chunk[lo] in _EDGE_CHARS:
            lo += 1
        while hi > lo and chunk[hi - 1] in _EDGE_CHARS:
            hi -= 1
        if lo == hi:
            continue
        tokens.append(
            Token(
                text=chunk[lo:hi].lower(),
                start=match.start() + lo,
                end=match.start() + hi,
            )
        )
    return tokens
