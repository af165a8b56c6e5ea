"""Exception types raised by robustsbm.

Every error carries a message that can be shown to a user as-is; the CLI
prints it without a traceback.
"""

from __future__ import annotations

from typing import Optional


class RobustSbmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(RobustSbmError, ValueError):
    """A parameter is outside the range an operation accepts."""


class InvalidProbabilityError(InvalidParameterError):
    """An edge probability a/n or b/n exceeds 1."""


class UnknownStrategyError(InvalidParameterError):
    pass


class BudgetInfeasibleError(RobustSbmError):
    """An adversary was asked for more edits than there are eligible pairs."""

    def __init__(self, message: str, max_feasible: int):
        super().__init__(f"{message} (maximum feasible: {max_feasible})")
        self.message = message
        self.max_feasible = int(max_feasible)

    def __reduce__(self):
        return (self.__class__, (self.message, self.max_feasible))


class ShapeError(RobustSbmError, ValueError):
    """Vertex counts, cluster sizes or cluster counts do not line up."""


class SolverFailure(RobustSbmError, RuntimeError):
    pass


class FormatErrorWithHint(RobustSbmError):
    """A malformed input file, reported with the offending line number."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        where = ""
        if path:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)
        self.message = message
        self.line = line
        self.path = path

    def __reduce__(self):
        return (self.__class__, (self.message, self.line, self.path))


class StageError(RobustSbmError, RuntimeError):
    """A pipeline stage failed; wraps the original error with stage and seed."""

    def __init__(self, stage: str, seed: int, cause: BaseException):
        super().__init__(f"stage '{stage}' failed for seed {seed}: {cause}")
        self.stage = stage
        self.seed = seed
        self.cause = cause

    def __reduce__(self):
        return (self.__class__, (self.stage, self.seed, self.cause))
