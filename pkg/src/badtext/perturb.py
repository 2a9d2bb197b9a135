"""Character-level attack variant generation.

Two rule families: substitution (a vowel becomes a look-alike symbol, e.g.
``e`` to ``3``) and duplication (a vowel is repeated, e.g. ``e`` to ``ee``).
Two sweep strategies: perturb one occurrence at a time, or perturb every
occurrence of one character at once.

Keys match case-insensitively. A substitution inserts its replacement
verbatim (so ``I`` becomes ``1``); a duplication repeats the original
character, preserving its case. Offsets are 0-based Unicode scalar indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .errors import InvariantViolation, RuleParseError


class RuleMode(str, Enum):
    SUBSTITUTE = "substitute"
    DUPLICATE = "duplicate"


class Strategy(str, Enum):
    SINGLE_POSITION = "single_position"
    ALL_OCCURRENCES = "all_occurrences"


@dataclass(frozen=True)
class RuleSet:
    """A validated grapheme-to-replacement mapping with its attack mode."""

    mode: RuleMode
    mapping: Mapping[str, str]

    def __post_init__(self) -> None:
        validated: dict[str, str] = {}
        for key, replacement in self.mapping.items():
            if not isinstance(key, str) or not isinstance(replacement, str):
                raise InvariantViolation("rule keys and replacements must be strings")
            if len(key) != 1:
                raise InvariantViolation(f"rule key must be a single character: {key!r}")
            if key != key.lower():
                raise InvariantViolation(f"rule key must be lowercase: {key!r}")
            if self.mode is RuleMode.SUBSTITUTE:
                if not replacement:
                    raise InvariantViolation(f"empty replacement for key {key!r}")
                if replacement == key:
                    raise InvariantViolation(f"identity replacement for key {key!r}")
            else:
                k = len(replacement)
                if k < 2 or replacement != key * k:
                    raise InvariantViolation(
                        f"duplicate-mode replacement for {key!r} must repeat the key"
                        f" at least twice, got {replacement!r}"
                    )
            validated[key] = replacement
        object.__setattr__(self, "mapping", MappingProxyType(validated))


def default_substitution_rules() -> RuleSet:
    """The leetspeak vowel map: a->@, e->3, i->1, o->0, u->v."""
    return RuleSet(
        RuleMode.SUBSTITUTE,
        {"a": "@", "e": "3", "i": "1", "o": "0", "u": "v"},
    )


def default_duplication_rules() -> RuleSet:
    """Every vowel doubled: a->aa, e->ee, i->ii, o->oo, u->uu."""
    return RuleSet(
        RuleMode.DUPLICATE,
        {"a": "aa", "e": "ee", "i": "ii", "o": "oo", "u": "uu"},
    )


def load_rules(path: str | Path) -> RuleSet:
    """Load a rule set from a JSON file ``{"mode": ..., "map": {...}}``."""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RuleParseError(f"{path}: {exc}") from exc
    if not isinstance(document, dict):
        raise RuleParseError(f"{path}: expected a JSON object")
    try:
        mode_name = document["mode"]
        mapping = document["map"]
    except KeyError as exc:
        raise RuleParseError(f"{path}: missing key {exc.args[0]!r}") from None
    try:
        mode = RuleMode(mode_name)
    except ValueError:
        raise RuleParseError(f"{path}: unknown mode {mode_name!r}") from None
    if not isinstance(mapping, dict):
        raise RuleParseError(f"{path}: 'map' must be an object")
    return RuleSet(mode, mapping)


@dataclass(frozen=True)
class Variant:
    """One attacked text plus the provenance needed to reproduce it.

    ``offset`` is the perturbed character position for single-position
    variants and ``None`` for all-occurrence variants.
    """

    sample_id: str
    strategy: Strategy
    rule_key: str
    offset: int | None
    text: str
    original_text: str


def _apply_at(text: str, i: int, rules: RuleSet) -> str:
    if rules.mode is RuleMode.SUBSTITUTE:
        return text[:i] + rules.mapping[text[i].lower()] + text[i + 1 :]
    k = len(rules.mapping[text[i].lower()])
    return text[:i] + text[i] * (k - 1) + text[i:]


def single_position_variants(
    text: str, rules: RuleSet, sample_id: str = ""
) -> list[Variant]:
    """One variant per case-insensitive occurrence of any rule key.

    Each variant modifies only that occurrence; output is ordered by
    character offset. Pure: identical inputs give identical lists.
    """
    variants: list[Variant] = []
    for i, ch in enumerate(text):
        key = ch.lower()
        if key not in rules.mapping:
            continue
        variants.append(
            Variant(
                sample_id=sample_id,
                strategy=Strategy.SINGLE_POSITION,
                rule_key=key,
                offset=i,
                text=_apply_at(text, i, rules),
                original_text=text,
            )
        )
    return variants


def all_occurrence_variants(
    text: str, rules: RuleSet, sample_id: str = ""
) -> list[Variant]:
    """One variant per rule key present in the text, perturbing every occurrence.

    Variants are ordered by the offset of the key's first occurrence.
    """
    # Insertion order of this dict is first-occurrence order.
    first_seen: dict[str, int] = {}
    for i, ch in enumerate(text):
        key = ch.lower()
        if key in rules.mapping and key not in first_seen:
            first_seen[key] = i

    variants: list[Variant] = []
    for key in first_seen:
        if rules.mode is RuleMode.SUBSTITUTE:
            replacement = rules.mapping[key]
            attacked = "".join(
                replacement if ch.lower() == key else ch for ch in text
            )
        else:
            k = len(rules.mapping[key])
            attacked = "".join(ch * k if ch.lower() == key else ch for ch in text)
        variants.append(
            Variant(
                sample_id=sample_id,
                strategy=Strategy.ALL_OCCURRENCES,
                rule_key=key,
                offset=None,
                text=attacked,
                original_text=text,
            )
        )
    return variants


def generate_variants(
    text: str, rules: RuleSet, strategy: Strategy, sample_id: str = ""
) -> list[Variant]:
    """Dispatch to the generator for ``strategy``."""
    if strategy is Strategy.SINGLE_POSITION:
        return single_position_variants(text, rules, sample_id)
    return all_occurrence_variants(text, rules, sample_id)
