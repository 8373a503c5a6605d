"""Exception hierarchy for the engine.

Three broad families map onto the CLI / service exit contract:
validation problems (bad input files, bad config), runtime problems
(corrupt artifacts, impossible requests), and endpoint problems
(the external generation service misbehaving).
"""


class EngineError(Exception):
    """Base class for all engine errors."""

    exit_code = 2


class ValidationError(EngineError):
    """Invalid input data or configuration."""

    exit_code = 1


class IngestError(ValidationError):
    """Corpus files failed validation (duplicate ids, dangling refs, ...)."""


class ConfigError(ValidationError):
    """Pipeline configuration is inconsistent or incomplete."""


class ColdStartRequired(EngineError):
    """A user has no embedded profile documents to pool."""

    def __init__(self, user_id: str):
        super().__init__(f"user {user_id!r} has no embedded profile documents")
        self.user_id = user_id


class EmptyCandidates(EngineError):
    """Candidate gathering produced no documents for a query."""

    def __init__(self, user_id: str, mode: str):
        super().__init__(f"no candidate documents for user {user_id!r} under mode {mode}")
        self.user_id = user_id
        self.mode = mode


class CorruptArtifact(EngineError):
    """A persisted artifact failed its integrity check on reload."""


class ArtifactIOError(EngineError):
    """Filesystem failure while persisting or reloading artifacts."""

    def __init__(self, path, cause):
        super().__init__(f"I/O failure at {path}: {cause}")
        self.path = str(path)


class GenerationUnavailable(EngineError):
    """The generation endpoint could not be reached after retries."""

    exit_code = 3


class ProtocolError(EngineError):
    """The generation endpoint replied outside the wire contract."""

    exit_code = 3
