"""Build and Attack phases: baseline a scorer, sweep variants, tally metrics.

A baseline scores every sample once and tallies the ternary distribution.
An attack generates variants for each sample, scores them all, and reports
flips, per-outcome deltas, and the per-sample worst case (most negative
delta), which drives the post-attack distribution: that is the variant an
adversary would actually submit.

When the query budget runs out mid-run the partial report is attached to
the raised :class:`~badtext.errors.BudgetExhausted` so callers can still
emit everything gathered so far.

Tie-breaking is always ascending sample id, then ascending variant offset,
so reports are reproducible byte for byte (timestamps aside).
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Sample
from .errors import BudgetExhausted, EmptyReportError, NoProbabilityOutcomesError
from .perturb import RuleSet, Strategy, Variant, generate_variants
from .scorer import (
    Polarity,
    PolarityThresholds,
    ProbabilityScore,
    Score,
    classify,
    score_from_dict,
    score_to_dict,
)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _empty_distribution() -> dict[str, int]:
    return {p.value: 0 for p in Polarity}


def variant_to_dict(variant: Variant) -> dict:
    return {
        "sample_id": variant.sample_id,
        "strategy": variant.strategy.value,
        "rule_key": variant.rule_key,
        "offset": variant.offset,
        "text": variant.text,
        "original_text": variant.original_text,
    }


def variant_from_dict(data: dict) -> Variant:
    return Variant(
        sample_id=data["sample_id"],
        strategy=Strategy(data["strategy"]),
        rule_key=data["rule_key"],
        offset=data["offset"],
        text=data["text"],
        original_text=data["original_text"],
    )


@dataclass(frozen=True)
class BaselineEntry:
    sample_id: str
    score: Score
    polarity: Polarity


@dataclass
class BaselineReport:
    category: str
    scorer_id: str
    per_sample: list[BaselineEntry]
    distribution: dict[str, int]
    primary_label: str = "toxicity"
    timestamp: str = field(default_factory=_now)
    partial: bool = False

    def score_for(self, sample_id: str) -> Score:
        for entry in self.per_sample:
            if entry.sample_id == sample_id:
                return entry.score
        raise KeyError(sample_id)

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "scorer_id": self.scorer_id,
            "primary_label": self.primary_label,
            "timestamp": self.timestamp,
            "partial": self.partial,
            "distribution": dict(sorted(self.distribution.items())),
            "per_sample": [
                {
                    "sample_id": e.sample_id,
                    "score": score_to_dict(e.score),
                    "polarity": e.polarity.value,
                }
                for e in self.per_sample
            ],
        }


@dataclass(frozen=True)
class AttackOutcome:
    """One scored variant next to its sample's baseline."""

    variant: Variant
    baseline: Score
    attacked: Score
    delta: float | None
    flipped: bool

    def to_dict(self) -> dict:
        return {
            "variant": variant_to_dict(self.variant),
            "baseline": score_to_dict(self.baseline),
            "attacked": score_to_dict(self.attacked),
            "delta": self.delta,
            "flipped": self.flipped,
        }


@dataclass
class AttackReport:
    category: str
    scorer_id: str
    strategy: Strategy
    outcomes: list[AttackOutcome]
    per_sample_max_reduction: dict[str, float]
    flip_count: int
    pre_distribution: dict[str, int]
    post_distribution: dict[str, int]
    primary_label: str = "toxicity"
    timestamp: str = field(default_factory=_now)
    partial: bool = False

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "scorer_id": self.scorer_id,
            "strategy": self.strategy.value,
            "primary_label": self.primary_label,
            "timestamp": self.timestamp,
            "partial": self.partial,
            "flip_count": self.flip_count,
            "pre_distribution": dict(sorted(self.pre_distribution.items())),
            "post_distribution": dict(sorted(self.post_distribution.items())),
            "per_sample_max_reduction": dict(
                sorted(self.per_sample_max_reduction.items())
            ),
            "outcomes": [o.to_dict() for o in self.outcomes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AttackReport":
        outcomes = [
            AttackOutcome(
                variant=variant_from_dict(o["variant"]),
                baseline=score_from_dict(o["baseline"]),
                attacked=score_from_dict(o["attacked"]),
                delta=o["delta"],
                flipped=o["flipped"],
            )
            for o in data["outcomes"]
        ]
        return cls(
            category=data["category"],
            scorer_id=data["scorer_id"],
            strategy=Strategy(data["strategy"]),
            outcomes=outcomes,
            per_sample_max_reduction=dict(data["per_sample_max_reduction"]),
            flip_count=data["flip_count"],
            pre_distribution=dict(data["pre_distribution"]),
            post_distribution=dict(data["post_distribution"]),
            primary_label=data.get("primary_label", "toxicity"),
            timestamp=data["timestamp"],
            partial=data["partial"],
        )


def run_baseline(
    samples: Sequence[Sample],
    scorer,
    thresholds: PolarityThresholds,
    category: str = "",
) -> BaselineReport:
    """Score every sample once and tally the polarity distribution."""
    if not samples:
        raise ValueError("run_baseline needs at least one sample")
    label = scorer.primary_label
    entries: list[BaselineEntry] = []
    distribution = _empty_distribution()
    for sample in samples:
        try:
            score = scorer.score(sample.text)
        except BudgetExhausted as exc:
            exc.partial_report = BaselineReport(
                category=category,
                scorer_id=scorer.scorer_id,
                per_sample=entries,
                distribution=distribution,
                primary_label=label,
                partial=True,
            )
            raise
        polarity = classify(score, thresholds, label)
        entries.append(BaselineEntry(sample.id, score, polarity))
        distribution[polarity.value] += 1
    return BaselineReport(
        category=category,
        scorer_id=scorer.scorer_id,
        per_sample=entries,
        distribution=distribution,
        primary_label=label,
    )


def _worst_outcome(outcomes: Sequence[AttackOutcome]) -> AttackOutcome | None:
    """The adversary's pick among one sample's outcomes.

    With numeric deltas: the most negative delta (first on ties, i.e.
    lowest offset). Polarity-only: the first outcome that flipped, if any.
    """
    with_delta = [o for o in outcomes if o.delta is not None]
    if with_delta:
        return min(with_delta, key=lambda o: o.delta)
    for outcome in outcomes:
        if outcome.flipped:
            return outcome
    return None


def run_attack(
    samples: Sequence[Sample],
    scorer,
    rules: RuleSet,
    strategy: Strategy,
    thresholds: PolarityThresholds,
    baseline: BaselineReport | None = None,
    category: str = "",
) -> AttackReport:
    """Generate, score, and tally every variant of every sample.

    Baselines come from ``baseline`` when given (saving one query per
    sample), otherwise each sample is scored inline before its variants.
    """
    label = scorer.primary_label

    def build_report(
        outcomes, per_sample, pre, post, partial: bool
    ) -> AttackReport:
        reductions: dict[str, float] = {}
        for sample_id, sample_outcomes in per_sample:
            deltas = [o.delta for o in sample_outcomes if o.delta is not None]
            if deltas:
                reductions[sample_id] = min(deltas)
        return AttackReport(
            category=category,
            scorer_id=scorer.scorer_id,
            strategy=strategy,
            outcomes=outcomes,
            per_sample_max_reduction=reductions,
            flip_count=sum(1 for o in outcomes if o.flipped),
            pre_distribution=pre,
            post_distribution=post,
            primary_label=label,
            partial=partial,
        )

    outcomes: list[AttackOutcome] = []
    per_sample: list[tuple[str, list[AttackOutcome]]] = []
    pre = _empty_distribution()
    post = _empty_distribution()

    for sample in samples:
        try:
            if baseline is not None:
                base_score = baseline.score_for(sample.id)
            else:
                base_score = scorer.score(sample.text)
            variants = generate_variants(sample.text, rules, strategy, sample.id)
            sample_outcomes: list[AttackOutcome] = []
            for variant in variants:
                attacked = scorer.score(variant.text)
                delta = None
                if isinstance(base_score, ProbabilityScore) and isinstance(
                    attacked, ProbabilityScore
                ):
                    delta = attacked.value(label) - base_score.value(label)
                flipped = classify(attacked, thresholds, label) != classify(
                    base_score, thresholds, label
                )
                sample_outcomes.append(
                    AttackOutcome(variant, base_score, attacked, delta, flipped)
                )
        except BudgetExhausted as exc:
            exc.partial_report = build_report(
                outcomes, per_sample, pre, post, partial=True
            )
            raise

        outcomes.extend(sample_outcomes)
        per_sample.append((sample.id, sample_outcomes))
        base_class = classify(base_score, thresholds, label)
        pre[base_class.value] += 1
        worst = _worst_outcome(sample_outcomes)
        if worst is None:
            post[base_class.value] += 1
        else:
            post[classify(worst.attacked, thresholds, label).value] += 1

    return build_report(outcomes, per_sample, pre, post, partial=False)


def flip_rate(report: AttackReport) -> float:
    """Fraction of outcomes whose classification changed."""
    if not report.outcomes:
        raise EmptyReportError("attack report has no outcomes")
    return report.flip_count / len(report.outcomes)


def max_reduction(report: AttackReport) -> AttackOutcome:
    """The outcome with the most negative delta; ties go to the smallest id."""
    candidates = [o for o in report.outcomes if o.delta is not None]
    if not candidates:
        raise NoProbabilityOutcomesError("attack report has no numeric deltas")
    return min(
        candidates,
        key=lambda o: (
            o.delta,
            o.variant.sample_id,
            o.variant.offset if o.variant.offset is not None else -1,
        ),
    )
