"""Exception taxonomy shared by every stage of the pipeline."""


class PipelineError(Exception):
    """Base class for all recoverable pipeline failures."""


# audio ingest
class TruncatedInput(PipelineError):
    pass


class MalformedContainer(PipelineError):
    pass


class UnsupportedEncoding(PipelineError):
    pass


class UnsupportedFormat(PipelineError):
    """Container could not be identified from its magic bytes."""


class ExternalDecoderFailure(PipelineError):
    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message)
        self.diagnostics = diagnostics


class EmptyAudio(PipelineError):
    pass


class InvalidParameter(PipelineError, ValueError):
    pass


# dsp
class InsufficientAudio(PipelineError):
    pass


# recognizer
class InvalidModel(PipelineError):
    pass


class SessionClosed(PipelineError):
    pass


class MalformedEngineOutput(PipelineError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


# language model
class InvalidCorpus(PipelineError):
    pass


# evaluation
class UndefinedWer(PipelineError):
    pass


class ManifestError(PipelineError):
    pass


# output
class OutputError(PipelineError):
    pass
