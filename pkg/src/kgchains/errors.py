class KgchainsError(Exception):
    """Base for all errors raised by this package."""


class UsageError(KgchainsError):
    """Bad command-line usage or configuration. CLI exit code 1."""


class DataError(KgchainsError):
    """Malformed, missing, or inconsistent input data. CLI exit code 2."""


class NumericError(KgchainsError):
    """Non-finite loss or other numeric failure during training. CLI exit code 3."""
