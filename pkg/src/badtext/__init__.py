"""badtext: baseline, attack, and defend black-box text classifiers.

The package walks one loop: score a sampled corpus (build), sweep
single-character substitution and duplication variants against the scorer
and measure flips and score deltas (attack), then detect and reverse the
perturbations through candidate expansion and rescore (defend).
"""

__version__ = "0.1.0"

from .corpus import Sample, SampleDraw, SamplePlan, load_dataset, sample_category
from .defense import (
    Aggregation,
    CandidateText,
    CandidateWord,
    DefenseResult,
    Dictionary,
    Provenance,
    SuspectToken,
    candidate_texts,
    defend_attack_report,
    defend_score,
    detect_suspect_tokens,
    edit_neighbors,
    expand_token,
    invert_rules,
    log_attack,
)
from .harness import (
    AttackOutcome,
    AttackReport,
    BaselineReport,
    flip_rate,
    max_reduction,
    run_attack,
    run_baseline,
)
from .perturb import (
    RuleMode,
    RuleSet,
    Strategy,
    Variant,
    all_occurrence_variants,
    default_duplication_rules,
    default_substitution_rules,
    load_rules,
    single_position_variants,
)
from .ratelimit import BudgetLedger, MockClock, RateLimit, SlotLimiter, acquire_slot
from .scorer import (
    BudgetedScorer,
    HttpAdapterConfig,
    HttpScorer,
    LexiconModel,
    LexiconScorer,
    Polarity,
    PolarityScore,
    PolarityThresholds,
    ProbabilityScore,
    ReplayScorer,
    Score,
    classify,
    http_score,
    lexicon_score,
    load_fixture,
    replay_score,
    to_polarity,
    tokenize,
)

__all__ = [
    "__version__",
    # corpus
    "Sample",
    "SamplePlan",
    "SampleDraw",
    "load_dataset",
    "sample_category",
    # perturb
    "RuleMode",
    "RuleSet",
    "Strategy",
    "Variant",
    "default_substitution_rules",
    "default_duplication_rules",
    "load_rules",
    "single_position_variants",
    "all_occurrence_variants",
    # scorer
    "Polarity",
    "ProbabilityScore",
    "PolarityScore",
    "Score",
    "PolarityThresholds",
    "to_polarity",
    "classify",
    "LexiconModel",
    "lexicon_score",
    "LexiconScorer",
    "ReplayScorer",
    "replay_score",
    "load_fixture",
    "HttpAdapterConfig",
    "http_score",
    "HttpScorer",
    "BudgetedScorer",
    "tokenize",
    # rate limiting
    "RateLimit",
    "SlotLimiter",
    "MockClock",
    "BudgetLedger",
    "acquire_slot",
    # harness
    "BaselineReport",
    "AttackOutcome",
    "AttackReport",
    "run_baseline",
    "run_attack",
    "flip_rate",
    "max_reduction",
    # defense
    "Dictionary",
    "SuspectToken",
    "Provenance",
    "CandidateWord",
    "CandidateText",
    "DefenseResult",
    "Aggregation",
    "detect_suspect_tokens",
    "invert_rules",
    "expand_token",
    "edit_neighbors",
    "candidate_texts",
    "defend_score",
    "defend_attack_report",
    "log_attack",
]
