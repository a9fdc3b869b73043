"""Exception types shared across the package.

Every failure mode callers are expected to handle maps to one of these
classes. Parsers and validators raise these (never bare ValueError /
IndexError), so callers can distinguish bad input data from bugs.
"""

from __future__ import annotations


class SpecEditError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SpecEditError):
    """Input violates a documented precondition (non-finite values,
    empty collections, out-of-range indices, bad dimensions)."""


class ShapeMismatchError(SpecEditError):
    """Arrays that must share a shape do not."""


class ProviderError(SpecEditError):
    """A language-model provider call failed or the provider id is unknown."""


class DecompositionError(SpecEditError):
    """Instruction decomposition output could not be parsed into the
    requested number of usable instructions."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class CaptionParseError(SpecEditError):
    """Caption-pair output did not match the expected numbered format."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class ClassificationError(SpecEditError):
    """Ambiguity-classification output contained no recognizable verdict."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class BackendError(SpecEditError):
    """A denoiser backend is unavailable or failed to execute."""


class PipelineError(SpecEditError):
    """An editing run failed mid-flight; the message carries the step index."""


class UndefinedMetricError(SpecEditError):
    """A metric is mathematically undefined for the given inputs
    (e.g. a direction metric on a zero difference vector)."""


class EvaluationError(SpecEditError):
    """A judge-model evaluation returned an unusable verdict."""


class ConfigError(SpecEditError):
    """Configuration file or command-line arguments are invalid."""
