"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(EngineError):
    """Inputs are structurally incompatible (symbol tables, empty graphs, bad options)."""


class ParseError(EngineError):
    """A text input (lexicon, ARPA, FST, posterior, manifest) failed to parse."""

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        prefix = ""
        if source is not None and line is not None:
            prefix = f"{source}:{line}: "
        elif source is not None:
            prefix = f"{source}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)


class ResourceError(EngineError):
    """A guarded computation exceeded its configured budget."""


class PreconditionError(EngineError):
    """An operation was called on input that violates its stated precondition."""
