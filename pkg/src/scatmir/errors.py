"""Exception hierarchy shared across the toolkit."""


class ScatmirError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(ScatmirError, ValueError):
    """An argument violates an operation's precondition."""


class ConstructionError(ScatmirError, ValueError):
    """A filter bank cannot be built with the requested parameters."""


class ParseError(ScatmirError, ValueError):
    """Malformed MIDI or WAV bytes.

    ``offset`` is the byte position at which decoding failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SynthesisError(ScatmirError):
    """A score cannot be rendered with the given template pool."""


class DegradationError(ScatmirError):
    """A degradation cannot be applied to the input."""


class DescriptorError(ScatmirError):
    """An acoustic descriptor is undefined for the input."""


class TrainingError(ScatmirError):
    """Classifier training preconditions are not met."""


class EvaluationError(ScatmirError):
    """An evaluation protocol cannot be run on the given data."""
