"""Exception types shared across the package.

Everything derives from ValueError so callers that only care about
"bad input vs. bug" can catch one thing.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, graphs, shapes)."""


class TrainingError(ValueError):
    """Training diverged or produced non-finite values."""


class SamplingError(ValueError):
    """A sampling request cannot be satisfied (e.g. not enough candidates)."""


class NoCandidatesError(ValueError):
    """No admissible edge edits exist for the requested target."""


class SizeCapError(ValueError):
    """An exact enumeration would exceed its configured size cap."""
