"""Exception types shared across the framework."""


class ModelError(Exception):
    """Base class for model construction and execution errors."""


class DuplicateId(ModelError):
    pass


class IncompatibleKinds(ModelError):
    def __init__(self, kind1: str, kind2: str):
        super().__init__(f"kinds cannot share a location: {kind1!r}, {kind2!r}")
        self.kind1 = kind1
        self.kind2 = kind2


class UnknownKind(ModelError):
    pass


class EffectViolatesSchema(ModelError):
    pass


class NonPositiveSpeed(ModelError):
    pass


class UnknownScopeName(ModelError):
    pass


class IncompatibleInterface(ModelError):
    pass


class AttributeConflict(ModelError):
    pass


class InsufficientEventCoverage(ModelError):
    def __init__(self, missing):
        super().__init__(f"substituted model does not emit: {sorted(missing)}")
        self.missing = frozenset(missing)


class UnknownColumn(ModelError):
    pass


class UnknownParameter(ModelError):
    def __init__(self, name: str, suggestion: str | None = None):
        msg = f"unknown parameter {name!r}"
        if suggestion:
            msg += f" (did you mean {suggestion!r}?)"
        super().__init__(msg)
        self.name = name
        self.suggestion = suggestion


class ParseError(ModelError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        at = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{at}")
        self.line = line
        self.column = column


class EngineError(ModelError):
    """Runtime failure inside a simulation run, carrying event context."""

    def __init__(self, message: str, time: float | None = None, subject: str | None = None):
        ctx = ""
        if time is not None:
            ctx = f" [t={time:.6g}, subject={subject}]"
        super().__init__(message + ctx)
        self.time = time
        self.subject = subject
