"""Exception types shared across the toolkit.

The CLI maps :class:`OocError` subclasses to exit status 1 (bad input or
configuration); any other exception is an internal error (status 2).
"""


class OocError(Exception):
    """Base class for every error the toolkit raises deliberately."""


class FormatError(OocError):
    """A binary or text file does not follow its documented layout."""


class AlignmentError(OocError):
    """Companion files disagree about row or id counts."""


class ValidationError(OocError):
    """Content violates a declared invariant (non-finite values, bad enums, duplicates)."""


class DegenerateInputError(OocError):
    """Input is structurally valid but unusable, e.g. an all-zero embedding row."""


class MissingIdError(OocError, KeyError):
    """An id could not be resolved in a store, manifest, or assignment map."""

    def __str__(self) -> str:  # KeyError would repr() the message
        return Exception.__str__(self)


class InsufficientCandidatesError(OocError):
    """A mining pool is too small to draw a valid mismatch from."""


class ArgumentError(OocError, ValueError):
    """An argument is outside its documented range."""


class UndefinedMetricError(OocError):
    """A metric is undefined for the given inputs, e.g. a single-class ROC."""


class DivergenceError(OocError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss in epoch {epoch}")


class ConfigError(OocError):
    """A run configuration is incomplete or inconsistent."""
