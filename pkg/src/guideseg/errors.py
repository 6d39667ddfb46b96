"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage and format problems exit with 2,
per-record failures during a manifest run exit with 1.
"""


class GuideSegError(Exception):
    """Base class for all errors raised by guideseg."""


class FormatError(GuideSegError, ValueError):
    """A file does not follow the expected on-disk layout."""


class DataError(GuideSegError, ValueError):
    """Array contents violate a value-level invariant (NaN, out-of-range, ...)."""


class UsageError(GuideSegError, ValueError):
    """Arguments are inconsistent with each other or with the call contract."""


class ResourceError(GuideSegError, RuntimeError):
    """The requested computation exceeds a configured resource limit."""


class UndefinedResultError(GuideSegError, ArithmeticError):
    """A metric has no defined value for the given statistics."""
