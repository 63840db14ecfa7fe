"""Exception types raised across the package."""


class XliftError(Exception):
    """Base class for all package errors."""


class EmptyCorpusError(XliftError):
    pass


class SegmentationPolicyError(XliftError):
    pass


class EmptyVocabularyError(XliftError):
    pass


class FormatError(XliftError):
    """A file on disk does not follow the expected interchange format."""


class ZeroVectorError(XliftError):
    def __init__(self, token):
        super().__init__(f"cannot normalize zero vector for token {token!r}")
        self.token = token


class NotNormalizedError(XliftError):
    pass


class AlignmentError(XliftError):
    pass


class DivergenceError(AlignmentError):
    """Adversarial training produced a non-finite loss.

    ``last_state`` holds the last mapping matrix seen with a finite loss.
    """

    def __init__(self, message, last_state):
        super().__init__(message)
        self.last_state = last_state


class EvaluationError(XliftError):
    pass


class DocumentError(XliftError):
    def __init__(self, index, message="empty document"):
        super().__init__(f"{message} at index {index}")
        self.index = index


class RankError(XliftError):
    pass


class CipherError(XliftError):
    pass


class DomainSplitError(XliftError):
    pass


class ConfigError(XliftError):
    pass
