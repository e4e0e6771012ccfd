"""Exception hierarchy shared across the pipeline.

Two families matter to callers: `ValidationError` for bad inputs/configs
(CLI exit code 2) and `PipelineError` for runtime failures (exit code 3).
"""


class ValidationError(Exception):
    """Invalid input data, schema violation, or bad configuration."""


class PipelineError(Exception):
    """Runtime failure inside an otherwise valid pipeline run."""


class ManifestError(ValidationError):
    """Manifest schema or invariant violation."""


class InputError(PipelineError):
    """Unreadable or undecodable media input (distinct from a no-face result)."""


class ExtractionError(PipelineError):
    """Embedding backend failed to produce an identity vector."""


class CacheError(PipelineError):
    """Embedding cache file is corrupt, truncated, or version-incompatible."""


class TrainingDivergedError(PipelineError):
    """Loss became non-finite during optimization."""
