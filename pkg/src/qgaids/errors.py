"""Exception hierarchy shared by every pipeline stage."""


class PipelineError(Exception):
    """Base class for all errors raised by qgaids."""


class DataError(PipelineError):
    pass


class MissingColumn(DataError):
    pass


class NonNumericContinuous(DataError):
    pass


class EmptyFile(DataError):
    pass


class EmptyTable(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class InvalidDimensions(DataError):
    pass


class TooFewRows(DataError):
    pass


class ClassMissing(DataError):
    pass


class DimensionMismatch(PipelineError, ValueError):
    pass


class DegenerateEmbedding(PipelineError):
    pass


class WindowTooShort(PipelineError):
    pass


class NotTemporal(PipelineError):
    pass


class InsufficientData(PipelineError):
    pass


class LengthMismatch(PipelineError, ValueError):
    pass


class TooLarge(PipelineError):
    pass


class SingleClassTraining(PipelineError):
    pass


class EmptyInput(PipelineError, ValueError):
    pass


class ConfigError(PipelineError, ValueError):
    pass


class FormatVersionError(PipelineError):
    pass
