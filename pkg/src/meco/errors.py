"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: DataError -> 2, ConfigError -> 3,
ExternalServiceError -> 4. Anything else is a bug.
"""


class MecoError(Exception):
    """Base class for all pipeline errors."""


class DataError(MecoError):
    """Unreadable, malformed, or internally inconsistent data."""


class ConfigError(MecoError):
    """Invalid configuration or a missing prerequisite artifact."""


class ExternalServiceError(MecoError):
    """A remote dependency (annotation endpoint) failed after retries."""
