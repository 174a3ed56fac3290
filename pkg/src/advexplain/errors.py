"""Exception types shared across the package."""


class AdvexplainError(Exception):
    """Base class for every error raised by this package."""


class SchemaMismatchError(AdvexplainError, ValueError):
    pass


class ParseError(AdvexplainError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class InsufficientClassError(AdvexplainError, ValueError):
    pass


class UnsupportedFormatError(AdvexplainError, ValueError):
    pass


class TruncatedCaptureError(AdvexplainError, ValueError):
    def __init__(self, message, record_index):
        super().__init__(message)
        self.record_index = record_index


class DegenerateTrainingError(AdvexplainError, ValueError):
    pass


class ModelFormatError(AdvexplainError, ValueError):
    """Model file is corrupt or has an unsupported version."""


class CapacityError(AdvexplainError, ValueError):
    pass


class SearchDomainEmptyError(AdvexplainError, ValueError):
    pass


class ConfigError(AdvexplainError, ValueError):
    pass
