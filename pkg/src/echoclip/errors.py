"""Exception hierarchy shared by every stage of the chain."""


class ClipError(Exception):
    """Base class for all errors raised by echoclip."""


class DataError(ClipError):
    """Input data could not be parsed or is inconsistent (CLI exit code 2)."""


class PipelineError(ClipError):
    """Analysis could not produce a result (CLI exit code 3)."""


class WavParseError(DataError):
    def __init__(self, chunk, message):
        self.chunk = chunk
        super().__init__(f"{chunk!s} chunk: {message}")


class UnsupportedFormatError(DataError):
    pass


class MissingChunkError(DataError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__("missing chunk seq " + ", ".join(str(s) for s in self.missing))


class AnnotationError(DataError):
    """Malformed interval annotation or manifest file."""


class IntegrityError(DataError):
    pass


class SessionStateError(PipelineError):
    pass


class DomainError(ValueError, ClipError):
    pass


class ConfigurationError(ValueError, ClipError):
    pass


class ShapeError(ValueError, PipelineError):
    pass


class InsufficientDataError(PipelineError):
    pass


class EmptySignalError(PipelineError):
    pass


class NoVoicingError(PipelineError):
    pass


class PreconditionError(PipelineError):
    pass


class PairingError(PipelineError):
    pass


class UndefinedReferenceError(ZeroDivisionError, PipelineError):
    pass
