"""Exception types raised across the package."""


class SeqSegError(Exception):
    """Base class for all package errors."""

    kind = "error"


class InvalidArgumentError(SeqSegError, ValueError):
    kind = "invalid-argument"


class SizeLimitError(SeqSegError, ValueError):
    kind = "size-limit"


class FormatError(SeqSegError):
    """A file on disk is missing, malformed, or fails its checksum."""

    kind = "format"

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{message} ({path})"
        super().__init__(message)
        self.path = path


class TrainingDivergenceError(SeqSegError, RuntimeError):
    kind = "training-divergence"

    def __init__(self, step, loss):
        super().__init__(f"non-finite loss {loss} at step {step}")
        self.step = step
        self.loss = loss
