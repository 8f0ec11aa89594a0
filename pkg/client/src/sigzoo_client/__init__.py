from .client import MANIFEST_HEADER, SigzooClient
from .config import ClientConfig
from .errors import (
    ApiError,
    BadRequest,
    ClientConfigError,
    ClientError,
    Conflict,
    ConnectionFailed,
    DimensionMismatch,
    NotFoundError,
    RequestTooLarge,
    ServerError,
    ServiceNotReady,
)
from .fdms import FdmsFormatError, manifest_for, pack_embeddings, unpack_embeddings

__all__ = [
    "ApiError",
    "BadRequest",
    "ClientConfig",
    "ClientConfigError",
    "ClientError",
    "Conflict",
    "ConnectionFailed",
    "DimensionMismatch",
    "FdmsFormatError",
    "MANIFEST_HEADER",
    "NotFoundError",
    "RequestTooLarge",
    "ServerError",
    "ServiceNotReady",
    "SigzooClient",
    "manifest_for",
    "pack_embeddings",
    "unpack_embeddings",
]
