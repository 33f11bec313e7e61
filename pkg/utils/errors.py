"""
Error types shared by every package.

Each error carries the CLI exit code it maps to.
"""

from typing import Any, Dict, List, Optional

from config import EXIT_CODES


class SFSCIError(Exception):
    """Base class for all library errors."""

    exit_code = EXIT_CODES["error"]


class ConfigError(SFSCIError):
    """Invalid configuration field, or a transform that cannot act on the input."""

    exit_code = EXIT_CODES["config"]

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")


class ParameterError(SFSCIError, ValueError):
    """Numeric argument outside its admissible range."""

    exit_code = EXIT_CODES["config"]


class DimensionError(SFSCIError, ValueError):
    """Shapes of cube, mask, measurement or filter do not agree."""

    exit_code = EXIT_CODES["config"]


class DomainError(SFSCIError, ValueError):
    """Non-finite or negative values where they are not allowed."""

    exit_code = EXIT_CODES["numeric"]


class MetricError(SFSCIError, ValueError):
    """Metric preconditions violated."""

    exit_code = EXIT_CODES["config"]


class StorageError(SFSCIError):
    """Malformed, missing or corrupted artifact on disk."""

    exit_code = EXIT_CODES["missing_artifact"]

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class MissingArtifactError(StorageError):
    """A command needs an artifact that an upstream command has not produced."""

    def __init__(self, artifact: str, producer: str):
        self.artifact = artifact
        self.producer = producer
        super().__init__(
            artifact,
            f"not found; run `{producer}` first to produce it"
        )


class TrainingError(SFSCIError):
    """Loss became non-finite during optimization."""

    exit_code = EXIT_CODES["numeric"]

    def __init__(
        self,
        message: str,
        diagnostics: Optional[Dict[str, Any]] = None,
        history: Optional[List[Any]] = None,
        last_good_state: Optional[Dict[str, Any]] = None
    ):
        self.diagnostics = diagnostics or {}
        self.history = history or []
        self.last_good_state = last_good_state
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        super().__init__(f"{message} ({details})" if details else message)
