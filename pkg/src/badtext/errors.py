"""Exception hierarchy shared across the package.

Every domain error derives from :class:`BadTextError` so the CLI can catch
one type and turn it into a clean exit code instead of a stack trace.
"""

from __future__ import annotations


class BadTextError(Exception):
    """Base class for all errors raised by this package."""


# --- corpus ingestion -----------------------------------------------------


class MissingColumnError(BadTextError):
    """The CSV header lacks a required column (``id`` or the text column)."""


class MalformedRowError(BadTextError):
    """A data row is structurally invalid; the message cites the 1-based line."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateIdError(BadTextError):
    """Two rows share the same id."""


class UnknownCategoryError(BadTextError):
    """The requested label category is absent from the loaded corpus."""


class EmptyEligibleSetError(BadTextError):
    """No sample meets the category threshold; distinct from a short draw."""


# --- perturbation rules ---------------------------------------------------


class RuleParseError(BadTextError):
    """A rule file is not valid JSON or not shaped like a rule set."""


class InvariantViolation(BadTextError):
    """A rule set (or other validated value) breaks a structural invariant."""


# --- scoring --------------------------------------------------------------


class MissingLabelError(BadTextError):
    """A probability score does not contain the label being read."""


class FixtureMissError(BadTextError):
    """A replay fixture has no recording for the requested text."""


class BudgetExhausted(BadTextError):
    """The query budget is spent.

    When raised out of a harness run, ``partial_report`` carries everything
    gathered before the budget ran out so callers can still emit it.
    """

    def __init__(self, message: str = "query budget exhausted", partial_report=None):
        super().__init__(message)
        self.partial_report = partial_report


class TransportError(BadTextError):
    """The HTTP request failed below the application layer."""


class RateLimitedByServer(BadTextError):
    """The server answered 429; surfaced distinctly so callers can back off."""


class ExtractionError(BadTextError):
    """A configured response path is missing or points at a non-number."""


# --- harness reports ------------------------------------------------------


class EmptyReportError(BadTextError):
    """The report holds no outcomes to aggregate."""


class NoProbabilityOutcomesError(BadTextError):
    """The report holds no outcome with a numeric delta."""


# --- configuration --------------------------------------------------------


class ConfigError(BadTextError):
    """The config file is invalid or references files that do not exist."""
