"""Connection settings and retry policy."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ClientConfigError


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    timeout: float = 10.0
    max_attempts: int = 3  # total tries, so retries = max_attempts - 1
    backoff_base: float = 0.2
    backoff_cap: float = 2.0
    default_seed: int | None = None

    def __post_init__(self):
        if not self.base_url:
            raise ClientConfigError("base_url is required")
        if self.timeout <= 0:
            raise ClientConfigError(f"timeout must be positive, got {self.timeout}")
        if self.max_attempts < 1:
            raise ClientConfigError(
                f"max_attempts must be at least 1, got {self.max_attempts}"
            )
        if self.backoff_base < 0 or self.backoff_cap < 0:
            raise ClientConfigError("backoff values must be nonnegative")
        object.__setattr__(self, "base_url", self.base_url.rstrip("/"))

    def backoff_for(self, attempt: int) -> float:
        """Delay before retry number ``attempt`` (1-based), capped exponential."""
        return min(self.backoff_cap, self.backoff_base * (2 ** (attempt - 1)))
