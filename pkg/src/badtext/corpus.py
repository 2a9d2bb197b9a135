"""CSV corpus ingestion and seeded per-category sampling.

The expected file format follows the public toxicity-comment releases:
UTF-8, comma-separated, double-quote quoting with embedded quotes doubled,
a header row with an ``id`` column, a text column (``comment_text`` unless
overridden), and any number of numeric label columns with values in [0, 1].

Sampling is reproducible across machines: the uniform draw uses numpy's
``default_rng`` (PCG64) seeded from the plan.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateIdError,
    EmptyEligibleSetError,
    MalformedRowError,
    MissingColumnError,
    UnknownCategoryError,
)

#: Label columns present in the reference corpus; files may carry more.
KNOWN_CATEGORIES = (
    "toxicity",
    "severe_toxicity",
    "obscene",
    "identity_attack",
    "insult",
    "threat",
)

DEFAULT_TEXT_COLUMN = "comment_text"


@dataclass(frozen=True)
class Sample:
    """One corpus row: unique id, raw text, and per-category labels in [0, 1]."""

    id: str
    text: str
    labels: Mapping[str, float]


@dataclass(frozen=True)
class SamplePlan:
    """How to draw an evaluation set for one category.

    ``threshold`` is inclusive: a label exactly at the threshold is eligible.
    ``top`` switches from a seeded uniform draw to the highest-scoring rows.
    """

    category: str
    threshold: float = 0.5
    count: int = 100
    seed: int = 0
    top: bool = False

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")


@dataclass(frozen=True)
class SampleDraw:
    """Result of :func:`sample_category`: the rows plus draw metadata."""

    samples: tuple[Sample, ...]
    category: str
    requested: int
    eligible: int
    shortfall: bool
    seed: int


def load_dataset(path: str | Path, text_column: str = DEFAULT_TEXT_COLUMN) -> list[Sample]:
    """Read a corpus CSV into samples, validating every row.

    Every column other than ``id`` and the text column is treated as a label
    and must parse as a number in [0, 1]; anything else is a
    :class:`MalformedRowError` naming the offending physical line.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError(f"{path}: empty file, no header row") from None

        if "id" not in header:
            raise MissingColumnError(f"{path}: header has no 'id' column")
        if text_column not in header:
            raise MissingColumnError(f"{path}: header has no '{text_column}' column")

        id_idx = header.index("id")
        text_idx = header.index(text_column)
        label_cols = [
            (i, name)
            for i, name in enumerate(header)
            if i not in (id_idx, text_idx)
        ]

        samples: list[Sample] = []
        seen_ids: set[str] = set()
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRowError(
                    line, f"expected {len(header)} fields, found {len(row)}"
                )
            sample_id = row[id_idx]
            if not sample_id:
                raise MalformedRowError(line, "empty id")
            if sample_id in seen_ids:
                raise DuplicateIdError(f"line {line}: duplicate id {sample_id!r}")
            text = row[text_idx]
            if not text:
                raise MalformedRowError(line, "empty text")

            labels: dict[str, float] = {}
            for i, name in label_cols:
                raw = row[i]
                try:
                    value = float(raw)
                except ValueError:
                    raise MalformedRowError(
                        line, f"label {name!r} is not numeric: {raw!r}"
                    ) from None
                if not 0.0 <= value <= 1.0:
                    raise MalformedRowError(
                        line, f"label {name!r} outside [0, 1]: {raw}"
                    )
                labels[name] = value

            seen_ids.add(sample_id)
            samples.append(Sample(id=sample_id, text=text, labels=labels))

    return samples


def sample_category(samples: Sequence[Sample], plan: SamplePlan) -> SampleDraw:
    """Draw up to ``plan.count`` samples whose category label meets the threshold.

    The draw is a pure function of its inputs: uniform without replacement
    from the eligible rows using PCG64 seeded with ``plan.seed`` (or the
    top-ranked rows when ``plan.top``). Output is sorted by id. When fewer
    rows are eligible than requested the draw succeeds with ``shortfall``
    set; zero eligible rows raise :class:`EmptyEligibleSetError`.
    """
    if not any(plan.category in s.labels for s in samples):
        raise UnknownCategoryError(f"category {plan.category!r} not in corpus labels")

    eligible = [
        s
        for s in samples
        if plan.category in s.labels and s.labels[plan.category] >= plan.threshold
    ]
    if not eligible:
        raise EmptyEligibleSetError(
            f"no sample has {plan.category} >= {plan.threshold}"
        )

    take = min(plan.count, len(eligible))
    if plan.top:
        ranked = sorted(eligible, key=lambda s: (-s.labels[plan.category], s.id))
        chosen = ranked[:take]
    else:
        rng = np.random.default_rng(plan.seed)
        idx = rng.choice(len(eligible), size=take, replace=False)
        chosen = [eligible[i] for i in idx]

    return SampleDraw(
        samples=tuple(sorted(chosen, key=lambda s: s.id)),
        category=plan.category,
        requested=plan.count,
        eligible=len(eligible),
        shortfall=len(eligible) < plan.count,
        seed=plan.seed,
    )
