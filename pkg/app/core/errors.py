"""
Error hierarchy.

Every failure raised by the services carries a human-readable `detail`
and the process exit code the command-line entry point returns for it.

Exit codes:
    - 0: success
    - 2: configuration error (invalid config file, flags or sampler budget)
    - 3: data validation error (manifest, payload, ids, norms, checkpoint/store mismatch)
    - 4: numeric failure (non-finite loss or gradient, failed gradient check)
"""


class GraphRerankError(Exception):
    """
    Base class of all toolkit errors.

    Example:
        >>> err = DataValidationError("duplicate id 7 at record 3")
        >>> err.exit_code
        3
    """

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(GraphRerankError):
    """Invalid configuration values, config file or command-line flags."""

    exit_code = 2


class DataValidationError(GraphRerankError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class NumericError(GraphRerankError):
    """Non-finite values or a failed numerical check."""

    exit_code = 4
