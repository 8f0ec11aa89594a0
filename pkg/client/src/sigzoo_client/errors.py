"""Typed client-side errors.

Server responses carry a stable ``error`` code string; each code maps to one
exception class here so callers can catch by family instead of parsing
messages. Transport-level failures (nothing listening, timeouts) get their
own class and never masquerade as server answers.
"""

from __future__ import annotations


class ClientError(Exception):
    """Base class for everything this package raises."""


class ClientConfigError(ClientError):
    """Local misuse: an invalid ClientConfig value."""


class ConnectionFailed(ClientError):
    """The server could not be reached after the configured retries."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class ApiError(ClientError):
    """A structured error answer from the server."""

    def __init__(self, code: str, message: str, status: int, details: dict):
        super().__init__(message)
        self.code = code
        self.status = status
        self.details = details


class BadRequest(ApiError):
    pass


class DimensionMismatch(ApiError):
    def __init__(self, code, message, status, details):
        expected = details.get("expected")
        got = details.get("got")
        if expected is not None and got is not None:
            message = f"{message} (expected {expected}, got {got})"
        super().__init__(code, message, status, details)


class Conflict(ApiError):
    pass


class NotFoundError(ApiError):
    pass


class ServiceNotReady(ApiError):
    pass


class RequestTooLarge(ApiError):
    pass


class ServerError(ApiError):
    pass


_CODE_MAP = {
    "empty-input": BadRequest,
    "shape-mismatch": BadRequest,
    "format-error": BadRequest,
    "non-finite-value": BadRequest,
    "range-error": BadRequest,
    "k-mismatch": BadRequest,
    "hash-mismatch": BadRequest,
    "config-error": BadRequest,
    "dim-mismatch": DimensionMismatch,
    "too-few-samples": Conflict,
    "insufficient-data": Conflict,
    "empty-store": Conflict,
    "duplicate-id": Conflict,
    "version-mismatch": Conflict,
    "update-in-progress": Conflict,
    "not-found": NotFoundError,
    "not-initialized": ServiceNotReady,
    "request-too-large": RequestTooLarge,
    "storage-failure": ServerError,
    "internal": ServerError,
}


def error_from_payload(status: int, payload: dict) -> ApiError:
    code = payload.get("error", "internal")
    cls = _CODE_MAP.get(code, ServerError if status >= 500 else BadRequest)
    return cls(code, payload.get("message", code), status,
               payload.get("details", {}) or {})
