"""Exception hierarchy shared by every stage of the pipeline."""


class HlsRagError(Exception):
    """Base class for all errors raised by hlsrag."""


class ConfigError(HlsRagError):
    """Invalid or unresolvable configuration (missing paths, bad values)."""


# corpus
class EmptyCorpusError(HlsRagError):
    """No usable documents matched the include patterns."""


# embedding
class InvalidInputError(HlsRagError, ValueError):
    """Caller passed a value that violates an operation's precondition."""


class EmbeddingProviderError(HlsRagError):
    """Remote embedder failed (network, auth, server). Safe to retry later."""

    retryable = True

    def __init__(self, message, *, status_code=None, failed_indices=None):
        super().__init__(message)
        self.status_code = status_code
        self.failed_indices = list(failed_indices or [])


class EmbeddingSchemaError(HlsRagError):
    """Remote embedder answered with the wrong shape or dimension."""


# index
class EmptyIndexError(HlsRagError):
    """Retrieval was attempted against an index with no entries."""


class DimensionMismatchError(HlsRagError, ValueError):
    pass


class DuplicateChunkError(HlsRagError, ValueError):
    pass


class IndexFileError(HlsRagError):
    """Base for persisted-index decoding failures."""


class IndexFormatError(IndexFileError):
    pass


class IndexVersionError(IndexFileError):
    pass


class IndexTruncatedError(IndexFileError):
    pass


class IndexChecksumError(IndexFileError):
    pass


# prompt
class ExtractionError(HlsRagError):
    """Main-body extraction could not make sense of the source."""


class AnnotationError(HlsRagError, ValueError):
    def __init__(self, message, positions=()):
        super().__init__(message)
        self.positions = list(positions)


class PromptTooLongError(HlsRagError):
    def __init__(self, length, limit):
        self.length = length
        self.limit = limit
        self.overflow = length - limit
        super().__init__(
            f"rendered prompt is {length} chars, {self.overflow} over the limit of {limit}"
        )


# generator
class GenerationAuthError(HlsRagError):
    """The model endpoint rejected our credentials; no attempt can succeed."""


class TransportError(HlsRagError):
    """A single generation request failed in transit (timeout, 5xx, reset)."""


# evaluator
class ToolNotFoundError(HlsRagError):
    """The synthesis tool binary is not installed or not on PATH."""


class ReportParseError(HlsRagError):
    def __init__(self, message, *, key=None, location=None):
        super().__init__(message)
        self.key = key
        self.location = location


class ReportConsistencyError(ReportParseError):
    """Reported latency disagrees with cycles x clock period."""


class ConfigHashMismatchError(HlsRagError):
    pass
