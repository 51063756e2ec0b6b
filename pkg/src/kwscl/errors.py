class KwsError(Exception):
    """Base class for package errors."""


class AudioFormatError(KwsError):
    pass


class UnsupportedAudioError(KwsError):
    pass


class DegenerateMixError(KwsError):
    pass


class ShapeError(KwsError, ValueError):
    pass


class CalibrationError(KwsError):
    pass


class IncompleteArtifactsError(KwsError):
    pass


class InsufficientDataError(KwsError):
    pass


class RehearsalError(KwsError):
    """Raised when an update would run without rehearsal data."""


class DatasetError(KwsError):
    pass


class CheckpointError(KwsError):
    pass


class UsageError(KwsError):
    pass
