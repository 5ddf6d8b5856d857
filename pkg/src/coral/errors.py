"""Exception hierarchy shared across the engine."""


class CoralError(Exception):
    """Base class for all engine errors."""


class UnknownLanguageError(CoralError, ValueError):
    pass


class IngestError(CoralError, ValueError):
    """Raised for malformed corpus input; message names the offending line."""


class NotFoundError(CoralError, LookupError):
    pass


class ConfigurationError(CoralError, ValueError):
    pass


class TransportError(CoralError):
    """A remote endpoint kept failing after all retries."""


class ScriptedBackendError(CoralError):
    """The scripted backend had no exchange matching a request."""

    def __init__(self, role_tag: str, ordinal: int, detail: str = ""):
        self.role_tag = role_tag
        self.ordinal = ordinal
        msg = f"no scripted exchange for role={role_tag!r} ordinal={ordinal}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class TemplateError(CoralError, KeyError):
    """A prompt template placeholder was left unbound."""

    def __init__(self, placeholder: str):
        self.placeholder = placeholder
        super().__init__(placeholder)

    def __str__(self) -> str:
        return f"unbound template placeholder: {self.placeholder}"


class JSONExtractionError(CoralError, ValueError):
    pass


class DatasetError(CoralError, ValueError):
    pass
