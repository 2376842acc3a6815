"""Exception hierarchy for urban-sim."""

from typing import List, Optional


class UrbanSimError(Exception):
    """Base class for all urban-sim errors. Carries the CLI exit code."""

    exit_code: int = 1


# --- Scenario errors ---

class ScenarioError(UrbanSimError):
    """Problem with a scenario file."""

    exit_code = 2


class ScenarioNotFoundError(ScenarioError):
    """The scenario path does not exist or cannot be read."""

    exit_code = 3


class ScenarioSyntaxError(ScenarioError):
    """The scenario file is not well-formed JSON."""

    exit_code = 4

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.line = line
        self.column = column


class ScenarioValidationError(ScenarioError):
    """The scenario parsed but violates the schema.

    `messages` holds one line-anchored message per offending field, e.g.
    ``line 12: qos.eta: Input should be less than or equal to 1``.
    """

    exit_code = 2

    def __init__(self, messages: List[str]):
        super().__init__("\n".join(messages))
        self.messages = messages


# --- Runtime errors ---

class SchedulingError(UrbanSimError):
    """An event was scheduled before the current clock."""


class LedgerInvariantError(UrbanSimError):
    """A reservation ledger mutation would exceed eta * capacity."""


class OutputError(UrbanSimError):
    """The output directory is not writable or a result file failed to write."""

    exit_code = 3
