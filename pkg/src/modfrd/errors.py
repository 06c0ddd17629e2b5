"""Exception hierarchy shared across the toolkit."""


class ModfrdError(Exception):
    """Base class for all toolkit errors."""


class MalformedRow(ModfrdError):
    """A row in an event-log file could not be parsed."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class InvariantViolation(ModfrdError):
    """A dataset breaks one of the record-level invariants."""


class InvalidConfig(ModfrdError):
    """A simulation or run configuration is inconsistent."""


class InsufficientUnits(ModfrdError):
    """Too few qualifying units for a ground-truth summary."""


class EmptyCohort(ModfrdError):
    """No units qualify for the requested cohort."""


class TooFewUnits(ModfrdError):
    """Not enough effective units on one side of the cutoff."""


class WeakInstrument(ModfrdError):
    """First-stage jump too small for a usable fuzzy estimate."""


class SingularDesign(ModfrdError):
    """Weighted regressors are numerically collinear."""


class DegenerateDenominator(ModfrdError):
    """Wald-ratio denominator is indistinguishable from zero."""


class DegenerateDensity(ModfrdError):
    """Estimated running-variable density at the cutoff is zero."""


class TooFewScores(ModfrdError):
    """Not enough score observations for a density test."""


class EmptySide(ModfrdError):
    """One side of the cutoff has no observations."""
