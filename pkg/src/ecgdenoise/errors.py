"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage/config problems exit
with 1, data problems (missing or malformed files) with 2, numeric
failures (non-finite loss, degenerate statistics) with 3.
"""


class EcgDenoiseError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(EcgDenoiseError):
    """Invalid configuration, option or argument."""

    exit_code = 1


class DataError(EcgDenoiseError):
    """Missing, truncated or malformed input data."""

    exit_code = 2


class ParseError(DataError):
    """A file did not conform to its declared format."""


class UnsupportedFormatError(DataError):
    """A WFDB storage format other than 212 was declared."""


class NumericError(EcgDenoiseError):
    """A numeric computation failed (non-finite values, degenerate input)."""

    exit_code = 3
