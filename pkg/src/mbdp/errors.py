"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid processing parameters.

    ``path`` is the dotted key path of the offending value (for example
    ``bands[0].compressor.cr1``) when the error comes from a config tree,
    otherwise the parameter name.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class SampleRateMismatch(ValueError):
    """A block or file does not match the configured sample rate."""
