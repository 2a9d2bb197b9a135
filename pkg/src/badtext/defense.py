"""Defend phase: detect suspect tokens, expand candidates, rescore, log.

The pipeline reverses exactly the attacks this package generates, without
any embedding model: suspect tokens (not in the dictionary, not
allowlisted, longer than one character, not purely numeric) are expanded
through three deterministic routes -

1. reversal of known symbol substitutions (every subset of mapped
   characters, so mixed rewrites like ``h@t3`` resolve),
2. collapsing runs of repeated letters (every combination of runs),
3. dictionary words within a small edit distance (kernel-backed scan).

Candidate words must appear in the dictionary; candidate texts are the
original plus the capped cross-product of per-suspect substitutions. The
final verdict takes the max (or min) primary-label score over all scored
candidates: under max, an attacker cannot lower the verdict below the
original reading.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

from . import editdist
from .errors import BudgetExhausted
from .harness import AttackReport
from .perturb import RuleMode, RuleSet
from .scorer import (
    Polarity,
    PolarityThresholds,
    ProbabilityScore,
    Score,
    classify,
    score_to_dict,
    tokenize,
)

# Subset enumeration blows up combinatorially; beyond this many rewrite
# sites only the all-sites rewrite is tried.
_MAX_ENUMERATED_SITES = 12

_SEVERITY = {Polarity.POSITIVE: 0, Polarity.NEUTRAL: 1, Polarity.NEGATIVE: 2}


class Dictionary:
    """Known words plus an allowlist of misspellings to leave alone.

    An allowlisted token is never a suspect even if it is also absent from
    ``words``. The word list is encoded once, lazily, for the edit-distance
    kernel.
    """

    def __init__(self, words, allowlist=()):
        self.words = frozenset(w.lower() for w in words if w)
        self.allowlist = frozenset(w.lower() for w in allowlist if w)
        self._encoded: editdist.EncodedWords | None = None

    @classmethod
    def load(
        cls, words_path: str | Path, allowlist_path: str | Path | None = None
    ) -> "Dictionary":
        """Read newline-delimited word-list files (UTF-8, one word per line)."""
        words = Path(words_path).read_text(encoding="utf-8").split()
        allow = (
            Path(allowlist_path).read_text(encoding="utf-8").split()
            if allowlist_path
            else ()
        )
        return cls(words, allow)

    def encoded(self) -> editdist.EncodedWords:
        if self._encoded is None:
            self._encoded = editdist.encode_words(sorted(self.words))
        return self._encoded


@dataclass(frozen=True)
class SuspectToken:
    token: str
    start: int
    end: int


def _is_numeric(token: str) -> bool:
    return token.isdigit()


def detect_suspect_tokens(text: str, dictionary: Dictionary) -> list[SuspectToken]:
    """Tokens that look like attack artifacts, with their spans."""
    suspects = []
    for token in tokenize(text):
        if len(token.text) <= 1 or _is_numeric(token.text):
            continue
        if token.text in dictionary.allowlist or token.text in dictionary.words:
            continue
        suspects.append(SuspectToken(token.text, token.start, token.end))
    return suspects


def invert_rules(rules: RuleSet) -> dict[str, str]:
    """Replacement-to-key map for a substitution rule set.

    Rules with multi-character replacements have no single-character
    reversal and are skipped with a warning.
    """
    if rules.mode is not RuleMode.SUBSTITUTE:
        raise ValueError("only substitution rules can be inverted")
    reversal: dict[str, str] = {}
    for key, replacement in rules.mapping.items():
        if len(replacement) != 1:
            warnings.warn(
                f"skipping rule {key!r} -> {replacement!r}:"
                f" multi-character replacements are not reversible",
                stacklevel=2,
            )
            continue
        reversal[replacement] = key
    return reversal


def default_reversal_map() -> dict[str, str]:
    """Inverse of the default leetspeak substitutions."""
    from .perturb import default_substitution_rules

    return invert_rules(default_substitution_rules())


class Provenance(str, Enum):
    ORIGINAL = "original"
    REVERSAL = "reversal"
    RUN_COLLAPSE = "run_collapse"
    EDIT_NEIGHBOR = "edit_neighbor"


class CandidateWord(NamedTuple):
    word: str
    provenance: Provenance


def reversal_rewrites(
    token: str, reversal: Mapping[str, str], dictionary: Dictionary
) -> list[str]:
    """Dictionary words reachable by undoing symbol substitutions.

    Every non-empty subset of mapped characters is reversed, so a token
    attacked at several positions still resolves. Sorted lexicographically.
    """
    sites = [i for i, ch in enumerate(token) if ch in reversal]
    if not sites:
        return []
    if len(sites) > _MAX_ENUMERATED_SITES:
        subsets: Sequence[tuple[int, ...]] = [tuple(sites)]
    else:
        subsets = [
            combo
            for r in range(1, len(sites) + 1)
            for combo in itertools.combinations(sites, r)
        ]
    found = set()
    for subset in subsets:
        chars = list(token)
        for i in subset:
            chars[i] = reversal[chars[i]]
        rewrite = "".join(chars)
        if rewrite in dictionary.words:
            found.add(rewrite)
    return sorted(found)


def run_collapse_rewrites(token: str, dictionary: Dictionary) -> list[str]:
    """Dictionary words reachable by collapsing repeated-letter runs to one.

    Each maximal run of length >= 2 may independently be collapsed; every
    combination is tried. Sorted lexicographically.
    """
    runs: list[tuple[int, int]] = []  # (start, length)
    i = 0
    while i < len(token):
        j = i
        while j < len(token) and token[j] == token[i]:
            j += 1
        if j - i >= 2:
            runs.append((i, j - i))
        i = j
    if not runs:
        return []
    if len(runs) > _MAX_ENUMERATED_SITES:
        chosen: Sequence[tuple[tuple[int, int], ...]] = [tuple(runs)]
    else:
        chosen = [
            combo
            for r in range(1, len(runs) + 1)
            for combo in itertools.combinations(runs, r)
        ]
    found = set()
    for subset in chosen:
        collapse_at = {start: length for start, length in subset}
        out = []
        i = 0
        while i < len(token):
            if i in collapse_at:
                out.append(token[i])
                i += collapse_at[i]
            else:
                out.append(token[i])
                i += 1
        rewrite = "".join(out)
        if rewrite in dictionary.words:
            found.add(rewrite)
    return sorted(found)


def edit_neighbors(
    token: str, dictionary: Dictionary, max_edit: int = 1
) -> list[str]:
    """Dictionary words within ``max_edit`` Levenshtein edits of ``token``."""
    if not dictionary.words or max_edit < 0:
        return []
    return editdist.neighbors(token, dictionary.encoded(), max_edit)


def expand_token(
    token: str,
    reversal: Mapping[str, str],
    dictionary: Dictionary,
    max_edit: int = 1,
    cap: int = 8,
) -> list[CandidateWord]:
    """Candidate readings of a suspect token, best class first.

    Deduplicated union of reversal rewrites, run collapses, and edit
    neighbors, in that precedence, lexicographic within each class,
    truncated to ``cap`` entries.
    """
    routes = (
        (reversal_rewrites(token, reversal, dictionary), Provenance.REVERSAL),
        (run_collapse_rewrites(token, dictionary), Provenance.RUN_COLLAPSE),
        (edit_neighbors(token, dictionary, max_edit), Provenance.EDIT_NEIGHBOR),
    )
    seen: set[str] = set()
    candidates: list[CandidateWord] = []
    for words, provenance in routes:
        for word in words:
            if word in seen:
                continue
            seen.add(word)
            candidates.append(CandidateWord(word, provenance))
            if len(candidates) == cap:
                return candidates
    return candidates


@dataclass(frozen=True)
class CandidateText:
    text: str
    provenance: Provenance


def _as_candidate_word(entry) -> CandidateWord:
    if isinstance(entry, CandidateWord):
        return entry
    # Bare strings carry no route information; rank them with the lowest
    # precedence class.
    return CandidateWord(str(entry), Provenance.EDIT_NEIGHBOR)


_PRECEDENCE = {
    Provenance.REVERSAL: 0,
    Provenance.RUN_COLLAPSE: 1,
    Provenance.EDIT_NEIGHBOR: 2,
}


def candidate_texts(
    text: str,
    suspects: Sequence[SuspectToken],
    expansions: Mapping[str, Sequence],
    combo_cap: int = 64,
) -> list[CandidateText]:
    """The original text plus every capped combination of substitutions.

    Suspects with empty expansions keep their original spelling. A
    combined text's provenance is the least-preferred class among its
    substitutions. At most ``combo_cap`` texts are returned, original
    included.
    """
    results = [CandidateText(text, Provenance.ORIGINAL)]
    active = [
        (s, [_as_candidate_word(e) for e in expansions.get(s.token, ())])
        for s in sorted(suspects, key=lambda s: s.start)
    ]
    active = [(s, words) for s, words in active if words]
    if not active:
        return results

    for combo in itertools.product(*(words for _, words in active)):
        if len(results) >= combo_cap:
            break
        # Splice right to left so earlier spans stay valid.
        rebuilt = text
        for (suspect, _), candidate in sorted(
            zip(active, combo), key=lambda pair: -pair[0][0].start
        ):
            rebuilt = (
                rebuilt[: suspect.start] + candidate.word + rebuilt[suspect.end :]
            )
        provenance = max(
            (c.provenance for c in combo), key=lambda p: _PRECEDENCE[p]
        )
        results.append(CandidateText(rebuilt, provenance))
    return results


class Aggregation(str, Enum):
    MAX = "max"
    MIN = "min"


@dataclass
class DefenseResult:
    original_text: str
    suspects: list[SuspectToken]
    candidates: list[CandidateText]
    scores: list[Score]
    aggregated: Score
    aggregation: Aggregation
    attack_detected: bool
    primary_label: str
    truncated: bool = False
    partial: bool = False

    @property
    def chosen(self) -> CandidateText:
        """The candidate whose score became the verdict."""
        index = self.scores.index(self.aggregated)
        return self.candidates[index]

    def to_dict(self) -> dict:
        return {
            "original_text": self.original_text,
            "attack_detected": self.attack_detected,
            "suspects": [s.token for s in self.suspects],
            "aggregation": self.aggregation.value,
            "aggregated": score_to_dict(self.aggregated),
            "chosen_candidate": self.chosen.text,
            "truncated": self.truncated,
            "partial": self.partial,
            "candidates": [
                {
                    "text": c.text,
                    "provenance": c.provenance.value,
                    "score": score_to_dict(s),
                }
                for c, s in zip(self.candidates, self.scores)
            ],
        }


def _score_rank(score: Score, label: str) -> float:
    if isinstance(score, ProbabilityScore):
        return score.value(label)
    return float(_SEVERITY[score.polarity])


def defend_score(
    text: str,
    scorer,
    dictionary: Dictionary,
    reversal: Mapping[str, str],
    aggregation: Aggregation = Aggregation.MAX,
    max_edit: int = 1,
    cap: int = 8,
    combo_cap: int = 64,
) -> DefenseResult:
    """Run detect -> expand -> rescore and aggregate the verdict.

    Max aggregation suits toxicity screening (assume the worst reading);
    min is the symmetric choice. If the budget dies mid-scan the verdict
    aggregates over the scored subset and the result is marked partial.
    Polarity scorers are ranked by severity (negative > neutral > positive).
    """
    suspects = detect_suspect_tokens(text, dictionary)
    expansions = {
        s.token: expand_token(s.token, reversal, dictionary, max_edit, cap)
        for s in suspects
    }
    candidates = candidate_texts(text, suspects, expansions, combo_cap)
    active_sizes = [len(expansions[s.token]) for s in suspects if expansions[s.token]]
    expected = 1 + (math.prod(active_sizes) if active_sizes else 0)
    truncated = expected > len(candidates)

    label = scorer.primary_label
    scores: list[Score] = []
    partial = False
    for candidate in candidates:
        try:
            scores.append(scorer.score(candidate.text))
        except BudgetExhausted:
            partial = True
            break
    if not scores:
        raise BudgetExhausted("no candidate could be scored")

    pick = max if aggregation is Aggregation.MAX else min
    aggregated = pick(scores, key=lambda s: _score_rank(s, label))

    return DefenseResult(
        original_text=text,
        suspects=suspects,
        candidates=candidates[: len(scores)],
        scores=scores,
        aggregated=aggregated,
        aggregation=aggregation,
        attack_detected=bool(suspects),
        primary_label=label,
        truncated=truncated,
        partial=partial,
    )


def log_attack(result: DefenseResult, sink: str | Path) -> None:
    """Append one line-delimited JSON record for a detected attack.

    No-op when nothing was detected. The record is written with a single
    ``write`` call so concurrent appenders do not interleave partial lines.
    """
    if not result.attack_detected:
        return
    original_score = result.scores[0]
    record = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "original_sha256": hashlib.sha256(
            result.original_text.encode("utf-8")
        ).hexdigest(),
        "suspects": [s.token for s in result.suspects],
        "chosen_candidate": result.chosen.text,
        "score_before": score_to_dict(original_score),
        "score_after": score_to_dict(result.aggregated),
    }
    line = json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"
    sink = Path(sink)
    with sink.open("a", encoding="utf-8") as fh:
        fh.write(line)


@dataclass
class DefendReport:
    """Restoration statistics for the variants of a prior attack report.

    ``flipped_count`` is how many outcomes in the attack report flipped;
    ``defended_count`` is how many of those the defense got to before any
    budget exhaustion (equal unless ``partial``).
    """

    category: str
    scorer_id: str
    aggregation: Aggregation
    entries: list[dict]
    flipped_count: int
    defended_count: int
    restored_count: int
    detected_count: int
    candidates_scored: int
    timestamp: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(
            timespec="seconds"
        )
    )
    partial: bool = False

    @property
    def restoration_rate(self) -> float | None:
        if self.defended_count == 0:
            return None
        return self.restored_count / self.defended_count

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "scorer_id": self.scorer_id,
            "aggregation": self.aggregation.value,
            "timestamp": self.timestamp,
            "partial": self.partial,
            "flipped_count": self.flipped_count,
            "defended_count": self.defended_count,
            "restored_count": self.restored_count,
            "detected_count": self.detected_count,
            "candidates_scored": self.candidates_scored,
            "restoration_rate": self.restoration_rate,
            "entries": self.entries,
        }


def defend_attack_report(
    report: AttackReport,
    scorer,
    dictionary: Dictionary,
    reversal: Mapping[str, str],
    aggregation: Aggregation = Aggregation.MAX,
    thresholds: PolarityThresholds | None = None,
    max_edit: int = 1,
    cap: int = 8,
    combo_cap: int = 64,
    log_path: str | Path | None = None,
) -> DefendReport:
    """Run the defense over every flipped variant of a prior attack.

    A variant counts as restored when the defended verdict classifies the
    same way its baseline did. Only flipped outcomes are defended: those
    are the attacks that succeeded, and re-scoring the rest would spend
    budget on texts whose classification never moved.
    """
    thresholds = thresholds or PolarityThresholds()
    label = scorer.primary_label
    flipped = [o for o in report.outcomes if o.flipped]
    entries: list[dict] = []
    restored_count = 0
    detected_count = 0
    candidates_scored = 0
    partial = False

    for outcome in flipped:
        try:
            result = defend_score(
                outcome.variant.text,
                scorer,
                dictionary,
                reversal,
                aggregation=aggregation,
                max_edit=max_edit,
                cap=cap,
                combo_cap=combo_cap,
            )
        except BudgetExhausted:
            partial = True
            break
        candidates_scored += len(result.scores)
        if result.partial:
            partial = True
        if result.attack_detected:
            detected_count += 1
            if log_path is not None:
                try:
                    log_attack(result, log_path)
                except OSError as exc:
                    warnings.warn(f"attack log write failed: {exc}", stacklevel=2)
        baseline_class = classify(outcome.baseline, thresholds, label)
        defended_class = classify(result.aggregated, thresholds, label)
        restored = defended_class == baseline_class
        if restored:
            restored_count += 1
        entries.append(
            {
                "sample_id": outcome.variant.sample_id,
                "variant_text": outcome.variant.text,
                "attack_detected": result.attack_detected,
                "suspects": [s.token for s in result.suspects],
                "chosen_candidate": result.chosen.text,
                "baseline_class": baseline_class.value,
                "defended_class": defended_class.value,
                "defended": score_to_dict(result.aggregated),
                "restored": restored,
            }
        )
        if partial:
            break

    return DefendReport(
        category=report.category,
        scorer_id=scorer.scorer_id,
        aggregation=aggregation,
        entries=entries,
        flipped_count=len(flipped),
        defended_count=len(entries),
        restored_count=restored_count,
        detected_count=detected_count,
        candidates_scored=candidates_scored,
        partial=partial,
    )
