"""Scoring backends behind one small interface.

Three ways to score a text:

* :class:`LexiconScorer` - a deterministic local logistic model over token
  weights. It stands in for the unreachable production classifiers and its
  vulnerability to character attacks is analytic: perturbing a weighted
  token breaks the exact-match lookup and zeroes its contribution.
* :class:`HttpScorer` - a generic JSON-over-HTTP adapter with a rate
  limiter and a query budget; response values are pulled out by
  slash-separated path expressions, so any JSON-returning classifier fits.
* :class:`ReplayScorer` - exact-match lookup against recorded fixtures,
  keyed by NFC-normalized text, for reproducible offline runs.

Scores are either per-label probabilities or a ternary polarity;
:func:`to_polarity` bridges the two using configurable thresholds.
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Mapping, Union

import requests

from .errors import (
    BudgetExhausted,
    ExtractionError,
    FixtureMissError,
    InvariantViolation,
    MissingLabelError,
    RateLimitedByServer,
    TransportError,
)
from .ratelimit import BudgetLedger, RateLimit, SlotLimiter
from .tokenizer import Token, tokenize

__all__ = [
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
    "load_fixture",
    "replay_score",
    "ReplayScorer",
    "HttpAdapterConfig",
    "http_score",
    "HttpScorer",
    "BudgetedScorer",
    "score_to_dict",
    "score_from_dict",
    "Token",
    "tokenize",
]

DEFAULT_PRIMARY_LABEL = "toxicity"

TEXT_PLACEHOLDER = "{{TEXT}}"


class Polarity(str, Enum):
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    POSITIVE = "positive"


@dataclass(frozen=True)
class ProbabilityScore:
    """Per-label probabilities in [0, 1]."""

    values: Mapping[str, float]

    def __post_init__(self) -> None:
        for label, value in self.values.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"label {label!r} outside [0, 1]: {value}")
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))

    def value(self, label: str) -> float:
        try:
            return self.values[label]
        except KeyError:
            raise MissingLabelError(f"score has no label {label!r}") from None


@dataclass(frozen=True)
class PolarityScore:
    """Ternary classification with no confidence attached."""

    polarity: Polarity


Score = Union[ProbabilityScore, PolarityScore]


@dataclass(frozen=True)
class PolarityThresholds:
    """Probability bands mapped onto the ternary output.

    At or above ``negative_min`` is Negative, at or below ``positive_max``
    is Positive, anything between is Neutral.
    """

    negative_min: float = 0.6
    positive_max: float = 0.4

    def __post_init__(self) -> None:
        if not 0.0 <= self.positive_max < self.negative_min <= 1.0:
            raise ValueError("need 0 <= positive_max < negative_min <= 1")


def to_polarity(
    score: ProbabilityScore,
    thresholds: PolarityThresholds,
    label: str = DEFAULT_PRIMARY_LABEL,
) -> PolarityScore:
    """Collapse the ``label`` probability into a ternary polarity."""
    value = score.value(label)
    if value >= thresholds.negative_min:
        return PolarityScore(Polarity.NEGATIVE)
    if value <= thresholds.positive_max:
        return PolarityScore(Polarity.POSITIVE)
    return PolarityScore(Polarity.NEUTRAL)


def classify(
    score: Score,
    thresholds: PolarityThresholds,
    label: str = DEFAULT_PRIMARY_LABEL,
) -> Polarity:
    """The polarity of any score kind: pass-through or thresholded."""
    if isinstance(score, PolarityScore):
        return score.polarity
    return to_polarity(score, thresholds, label).polarity


# --- lexicon oracle ---------------------------------------------------------


@dataclass(frozen=True)
class LexiconModel:
    """Logistic model: sigmoid(bias + sum of weights of matched tokens)."""

    weights: Mapping[str, float]
    bias: float = 0.0
    primary_label: str = DEFAULT_PRIMARY_LABEL

    def __post_init__(self) -> None:
        for token in self.weights:
            if not token or token != token.lower() or any(c.isspace() for c in token):
                raise ValueError(
                    f"lexicon tokens must be lowercase, non-empty and"
                    f" whitespace-free: {token!r}"
                )
        object.__setattr__(self, "weights", MappingProxyType(dict(self.weights)))

    @classmethod
    def load(
        cls,
        weights_path: str | Path,
        bias: float = 0.0,
        primary_label: str = DEFAULT_PRIMARY_LABEL,
    ) -> "LexiconModel":
        weights = json.loads(Path(weights_path).read_text(encoding="utf-8"))
        return cls(weights=weights, bias=bias, primary_label=primary_label)


def lexicon_score(model: LexiconModel, text: str) -> ProbabilityScore:
    """Score a text with the lexicon; every token occurrence counts once."""
    total = model.bias
    for token in tokenize(text):
        total += model.weights.get(token.text, 0.0)
    value = 1.0 / (1.0 + math.exp(-total))
    return ProbabilityScore({model.primary_label: value})


class LexiconScorer:
    """The lexicon model behind the common scorer surface."""

    scorer_id = "lexicon"

    def __init__(self, model: LexiconModel):
        self.model = model

    @property
    def primary_label(self) -> str:
        return self.model.primary_label

    def score(self, text: str) -> ProbabilityScore:
        return lexicon_score(self.model, text)


# --- record/replay fixtures -------------------------------------------------


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def load_fixture(path: str | Path) -> dict[str, Score]:
    """Load recorded scores from a JSON array.

    Each entry carries ``"text"`` plus either ``"scores": {label: number}``
    or ``"polarity": "negative"|"neutral"|"positive"``. Keys are stored
    NFC-normalized.
    """
    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(entries, list):
        raise InvariantViolation(f"{path}: fixture must be a JSON array")
    fixture: dict[str, Score] = {}
    for i, entry in enumerate(entries):
        try:
            text = entry["text"]
        except (TypeError, KeyError):
            raise InvariantViolation(f"{path}: entry {i} has no 'text'") from None
        if "scores" in entry:
            score: Score = ProbabilityScore(entry["scores"])
        elif "polarity" in entry:
            score = PolarityScore(Polarity(entry["polarity"]))
        else:
            raise InvariantViolation(
                f"{path}: entry {i} needs 'scores' or 'polarity'"
            )
        fixture[_nfc(text)] = score
    return fixture


_RAISE_ON_MISS = object()


def replay_score(
    fixture: Mapping[str, Score], text: str, default: Score | object = _RAISE_ON_MISS
) -> Score:
    """Exact-match lookup of ``text`` (NFC-normalized) in the fixture.

    Unrecorded texts raise :class:`FixtureMissError` unless ``default`` is
    given, which exploratory sweeps use as a sentinel score.
    """
    key = _nfc(text)
    if key in fixture:
        return fixture[key]
    if default is _RAISE_ON_MISS:
        raise FixtureMissError(f"no recorded score for {text!r}")
    return default  # type: ignore[return-value]


class ReplayScorer:
    """Fixture-backed scorer for offline, deterministic runs."""

    scorer_id = "replay"

    def __init__(
        self,
        fixture: Mapping[str, Score],
        primary_label: str = DEFAULT_PRIMARY_LABEL,
        default: Score | object = _RAISE_ON_MISS,
    ):
        self.fixture = fixture
        self.primary_label = primary_label
        self._default = default

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "ReplayScorer":
        return cls(load_fixture(path), **kwargs)

    def score(self, text: str) -> Score:
        return replay_score(self.fixture, text, self._default)


# --- generic HTTP adapter ----------------------------------------------------


@dataclass(frozen=True)
class HttpAdapterConfig:
    """Everything needed to query a JSON-in/JSON-out classifier.

    ``request_template`` is the raw request body with ``{{TEXT}}`` exactly
    once where the (JSON-escaped) text goes; ``response_paths`` maps each
    output label to a slash-separated path of keys and list indices into
    the response document.
    """

    endpoint: str
    request_template: str
    response_paths: Mapping[str, str]
    timeout: float = 10.0
    rate: RateLimit = field(default_factory=RateLimit)
    headers: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.request_template.count(TEXT_PLACEHOLDER) != 1:
            raise InvariantViolation(
                f"request_template must contain {TEXT_PLACEHOLDER} exactly once"
            )
        if not self.response_paths:
            raise InvariantViolation("response_paths must not be empty")
        object.__setattr__(
            self, "response_paths", MappingProxyType(dict(self.response_paths))
        )
        object.__setattr__(self, "headers", MappingProxyType(dict(self.headers)))


def _json_escape(text: str) -> str:
    # dumps wraps the string in quotes; the template supplies its own.
    return json.dumps(text, ensure_ascii=False)[1:-1]


def extract_path(document, path: str) -> float:
    """Walk ``document`` along a slash-separated path to a number."""
    node = document
    for part in path.split("/"):
        if isinstance(node, Mapping) and part in node:
            node = node[part]
        elif isinstance(node, list) and part.lstrip("-").isdigit():
            index = int(part)
            if -len(node) <= index < len(node):
                node = node[index]
            else:
                raise ExtractionError(f"path {path!r}: index {part} out of range")
        else:
            raise ExtractionError(f"path {path!r}: segment {part!r} not found")
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ExtractionError(f"path {path!r}: value is not a number: {node!r}")
    return float(node)


def _requests_transport(
    endpoint: str, body: str, headers: Mapping[str, str], timeout: float
) -> tuple[int, str]:
    try:
        response = requests.post(
            endpoint, data=body.encode("utf-8"), headers=dict(headers), timeout=timeout
        )
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    return response.status_code, response.text

Transport = Callable[[str, str, Mapping[str, str], float], tuple[int, str]]


def http_score(
    adapter: HttpAdapterConfig,
    ledger: BudgetLedger,
    text: str,
    limiter: SlotLimiter,
    transport: Transport = _requests_transport,
) -> ProbabilityScore:
    """Score ``text`` through the HTTP adapter, honoring rate and budget.

    The budget is checked before any network I/O; the ledger is charged
    exactly once per successful extraction. A 429 answer is surfaced as
    :class:`RateLimitedByServer` so callers can back off.
    """
    ledger.check()
    limiter.acquire()
    body = adapter.request_template.replace(TEXT_PLACEHOLDER, _json_escape(text))
    status, payload = transport(
        adapter.endpoint, body, adapter.headers, adapter.timeout
    )
    if status == 429:
        raise RateLimitedByServer(f"{adapter.endpoint} answered 429")
    if not 200 <= status < 300:
        raise TransportError(f"{adapter.endpoint} answered HTTP {status}")
    try:
        document = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ExtractionError(f"response is not valid JSON: {exc}") from exc
    values = {
        label: extract_path(document, path)
        for label, path in adapter.response_paths.items()
    }
    score = ProbabilityScore(values)
    ledger.record()
    return score


class HttpScorer:
    """HTTP adapter behind the common scorer surface.

    All calls funnel through one shared limiter; the ledger persists if
    its path is configured.
    """

    def __init__(
        self,
        adapter: HttpAdapterConfig,
        ledger: BudgetLedger,
        primary_label: str = DEFAULT_PRIMARY_LABEL,
        clock=None,
        transport: Transport = _requests_transport,
    ):
        self.adapter = adapter
        self.ledger = ledger
        self.primary_label = primary_label
        self.limiter = SlotLimiter(adapter.rate, clock=clock)
        self._transport = transport
        self.scorer_id = f"http:{adapter.endpoint}"

    def score(self, text: str) -> ProbabilityScore:
        return http_score(
            self.adapter, self.ledger, text, self.limiter, self._transport
        )


class BudgetedScorer:
    """Charge any scorer's calls against a ledger.

    Used so local scorers account queries the same way the HTTP adapter
    does: check before the call, record after success.
    """

    def __init__(self, inner, ledger: BudgetLedger):
        self.inner = inner
        self.ledger = ledger
        self.scorer_id = inner.scorer_id
        self.primary_label = inner.primary_label

    def score(self, text: str) -> Score:
        self.ledger.check()
        score = self.inner.score(text)
        self.ledger.record()
        return score


# --- serialization ------------------------------------------------------------


def score_to_dict(score: Score) -> dict:
    if isinstance(score, PolarityScore):
        return {"kind": "polarity", "class": score.polarity.value}
    return {"kind": "probability", "values": dict(sorted(score.values.items()))}


def score_from_dict(data: Mapping) -> Score:
    if data["kind"] == "polarity":
        return PolarityScore(Polarity(data["class"]))
    return ProbabilityScore(data["values"])
