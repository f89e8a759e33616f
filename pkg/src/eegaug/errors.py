"""Exception types shared across the package.

Each maps to a distinct CLI exit code so scripted callers can tell a bad
config from a corrupt input file from a broken experimental protocol.
"""


class EegaugError(Exception):
    """Base class for package errors."""


class ConfigError(EegaugError):
    """Invalid or unknown configuration (CLI exit code 2)."""


class DataFormatError(EegaugError):
    """Malformed segment store, annotations CSV or checkpoint (exit code 3)."""


class ProtocolError(EegaugError):
    """Experimental-protocol violation, e.g. synthetic data in a test split
    or a single-class training set (exit code 4)."""
