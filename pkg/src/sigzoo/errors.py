"""Error taxonomy shared by the library, the HTTP API and the CLI.

Every failure the service can surface carries a stable ``code`` string so
API clients and CLI scripts can branch without parsing messages.
"""

from __future__ import annotations

from typing import Any


class SigzooError(Exception):
    """Base class; ``code`` is stable across releases, ``message`` is not."""

    code = "internal"
    http_status = 500

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": self.message, "details": self.details}


class EmptyInput(SigzooError):
    code = "empty-input"
    http_status = 400


class ShapeMismatch(SigzooError):
    code = "shape-mismatch"
    http_status = 400


class FormatError(SigzooError):
    code = "format-error"
    http_status = 400


class NonFiniteValue(SigzooError):
    code = "non-finite-value"
    http_status = 400


class RangeError(SigzooError):
    code = "range-error"
    http_status = 400


class KMismatch(SigzooError):
    code = "k-mismatch"
    http_status = 400


class HashMismatch(SigzooError):
    code = "hash-mismatch"
    http_status = 400


class ConfigError(SigzooError):
    code = "config-error"
    http_status = 400


class DimMismatch(SigzooError):
    code = "dim-mismatch"
    http_status = 422


class TooFewSamples(SigzooError):
    code = "too-few-samples"
    http_status = 409


class InsufficientData(SigzooError):
    code = "insufficient-data"
    http_status = 409


class EmptyStore(SigzooError):
    code = "empty-store"
    http_status = 409


class DuplicateId(SigzooError):
    code = "duplicate-id"
    http_status = 409


class VersionMismatch(SigzooError):
    code = "version-mismatch"
    http_status = 409


class UpdateInProgress(SigzooError):
    code = "update-in-progress"
    http_status = 409


class NotFound(SigzooError):
    code = "not-found"
    http_status = 404


class NotInitialized(SigzooError):
    code = "not-initialized"
    http_status = 503


class StorageFailure(SigzooError):
    code = "storage-failure"
    http_status = 500
