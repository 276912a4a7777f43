"""
Exception hierarchy for timerefine.

Every error raised on purpose by the package derives from
``RefinementError``. Errors that describe invalid input also derive from
``ValueError`` so generic callers can keep catching that.
"""

from __future__ import annotations


class RefinementError(Exception):
    """Root of all timerefine errors."""


class InputError(RefinementError):
    """An input location could not be read (missing file, HTTP failure)."""


class LogFormatError(RefinementError, ValueError):
    """A CSV or XES document does not describe a valid event set."""


class PartitionError(RefinementError, ValueError):
    """An event cannot be placed in a trace under the partition spec."""


class RelabelingError(RefinementError, ValueError):
    """A relabeling map or assignment is inconsistent with the log."""


class SampleSizeError(RefinementError, ValueError):
    """A statistical procedure received too few observations."""


class FitError(RefinementError):
    """A mixture fit could not be produced."""


class SpecError(RefinementError, ValueError):
    """A synthetic log specification is invalid."""


class SearchCapError(RefinementError):
    """Exhaustive search was asked to enumerate too many refinements."""
