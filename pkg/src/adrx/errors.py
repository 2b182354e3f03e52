"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError exits 1, DataFormatError
exits 2, anything else exits 3.
"""


class ConfigError(Exception):
    """Invalid configuration: bad option values, missing files, empty lexicons."""


class DataFormatError(Exception):
    """Malformed input data: corpus files, embedding files, checkpoints."""
