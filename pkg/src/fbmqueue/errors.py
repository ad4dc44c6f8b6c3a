"""Exception hierarchy shared by the estimators, optimizers and CLI."""


class FbmQueueError(Exception):
    """Base class for all package errors."""


class DomainError(FbmQueueError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(FbmQueueError, ValueError):
    """A modelling assumption required by an estimator does not hold."""


class UnsupportedModelError(PreconditionError):
    """The model is valid but outside what the requested estimator covers."""


class BracketError(FbmQueueError, RuntimeError):
    """The coarse scan could not bracket a minimum inside the search range."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ConfigError(FbmQueueError, ValueError):
    """Invalid experiment configuration; ``field`` is the dotted key at fault."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
