"""Batch Levenshtein distance against an encoded word list.

Scanning a whole dictionary for neighbors of a suspect token is the one
numeric hot loop in the defense pipeline (dictionary size x token length
squared per query), so it gets two interchangeable kernels:

* a numba ``@njit`` kernel with per-word early abandon (default when numba
  imports), and
* a vectorized numpy fallback that runs the DP across all words at once.

Set ``BADTEXT_EDITDIST=numpy`` or ``BADTEXT_EDITDIST=numba`` to force a
backend; the flag is read per call so tests and benchmarks can flip it.
Both kernels honor the same contract: the returned value is the exact
distance when it is <= ``max_dist`` and ``max_dist + 1`` otherwise, so
their outputs are element-wise identical.

``benchmarks/bench_editdist.py`` compares the two paths.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

BACKEND_ENV_VAR = "BADTEXT_EDITDIST"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@dataclass(frozen=True)
class EncodedWords:
    """A word list packed into a zero-padded codepoint matrix."""

    words: tuple[str, ...]
    codes: np.ndarray  # (n, max_len) uint32, rows padded with 0
    lengths: np.ndarray  # (n,) int64


def encode_words(words: Sequence[str]) -> EncodedWords:
    """Pack ``words`` (order preserved) for the distance kernels."""
    words = tuple(words)
    n = len(words)
    max_len = max((len(w) for w in words), default=1)
    codes = np.zeros((n, max_len), dtype=np.uint32)
    lengths = np.zeros(n, dtype=np.int64)
    for row, word in enumerate(words):
        lengths[row] = len(word)
        for col, ch in enumerate(word):
            codes[row, col] = ord(ch)
    return EncodedWords(words=words, codes=codes, lengths=lengths)


def encode_token(token: str) -> np.ndarray:
    return np.array([ord(ch) for ch in token], dtype=np.uint32)


@njit(cache=True)
def _bounded_distances_numba(token, codes, lengths, max_dist):  # pragma: no cover
    n, max_len = codes.shape
    m = token.shape[0]
    out = np.empty(n, np.int64)
    prev = np.empty(max_len + 1, np.int64)
    cur = np.empty(max_len + 1, np.int64)
    for w in range(n):
        length = lengths[w]
        for j in range(length + 1):
            prev[j] = j
        abandoned = False
        for i in range(1, m + 1):
            cur[0] = i
            best = i
            tc = token[i - 1]
            for j in range(1, length + 1):
                cost = 0 if codes[w, j - 1] == tc else 1
                v = prev[j] + 1
                b = cur[j - 1] + 1
                if b < v:
                    v = b
                c = prev[j - 1] + cost
                if c < v:
                    v = c
                cur[j] = v
                if v < best:
                    best = v
            if best > max_dist:
                abandoned = True
                break
            for j in range(length + 1):
                prev[j] = cur[j]
        if abandoned:
            out[w] = max_dist + 1
        else:
            d = prev[length]
            out[w] = d if d <= max_dist else max_dist + 1
    return out


def _bounded_distances_numpy(
    token: np.ndarray, codes: np.ndarray, lengths: np.ndarray, max_dist: int
) -> np.ndarray:
    n, max_len = codes.shape
    m = token.shape[0]
    prev = np.broadcast_to(np.arange(max_len + 1, dtype=np.int64), (n, max_len + 1)).copy()
    cur = np.empty_like(prev)
    for i in range(1, m + 1):
        cur[:, 0] = i
        cost = (codes != token[i - 1]).astype(np.int64)
        for j in range(1, max_len + 1):
            np.minimum(prev[:, j] + 1, cur[:, j - 1] + 1, out=cur[:, j])
            np.minimum(cur[:, j], prev[:, j - 1] + cost[:, j - 1], out=cur[:, j])
        prev, cur = cur, prev
    dist = prev[np.arange(n), lengths]
    return np.minimum(dist, max_dist + 1)


def active_backend() -> str:
    """Which kernel the next call will use: ``"numba"`` or ``"numpy"``."""
    choice = os.environ.get(BACKEND_ENV_VAR, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError(f"{BACKEND_ENV_VAR}=numba but numba is not installed")
        return "numba"
    if choice:
        raise RuntimeError(f"unknown {BACKEND_ENV_VAR} value {choice!r}")
    return "numba" if HAVE_NUMBA else "numpy"


def bounded_distances(token: str, encoded: EncodedWords, max_dist: int) -> np.ndarray:
    """Distance from ``token`` to every encoded word, clamped at ``max_dist + 1``."""
    if max_dist < 0:
        raise ValueError("max_dist must be >= 0")
    token_codes = encode_token(token)
    if len(encoded.words) == 0:
        return np.empty(0, dtype=np.int64)
    if active_backend() == "numba":
        return _bounded_distances_numba(
            token_codes, encoded.codes, encoded.lengths, max_dist
        )
    return _bounded_distances_numpy(
        token_codes, encoded.codes, encoded.lengths, max_dist
    )


def neighbors(token: str, encoded: EncodedWords, max_dist: int) -> list[str]:
    """Encoded words within ``max_dist`` edits of ``token``, in list order."""
    dist = bounded_distances(token, encoded, max_dist)
    return [encoded.words[i] for i in np.flatnonzero(dist <= max_dist)]


def warmup() -> None:
    """Trigger JIT compilation so timed runs do not pay for it."""
    bounded_distances("ab", encode_words(("abc", "b")), 2)
