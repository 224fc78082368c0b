"""Exception types shared across the package.

Configuration problems (bad parameters, malformed configs, mismatched
shapes) and runtime numeric failures (non-finite rates, blown-up
integrations) are kept distinct so the CLI can map them to exit codes
1 and 2 respectively.
"""


class DiffQueueError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DiffQueueError):
    """Invalid parameters, shapes, or experiment configuration."""


class NumericsError(DiffQueueError):
    """A computation produced non-finite or out-of-range values."""


class ReplicaError(DiffQueueError):
    """A Monte Carlo replica failed; carries the replica index."""

    def __init__(self, replica: int, cause: BaseException):
        super().__init__(f"replica {replica} failed: {cause!r}")
        self.replica = replica
        self.cause = cause
