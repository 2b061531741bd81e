"""Shared exception types."""

from __future__ import annotations


class FormatError(ValueError):
    """A serialized artifact (store, checkpoint, interchange file) is malformed:
    bad magic, unsupported version, truncated body, or checksum mismatch."""


class DimensionError(ValueError):
    """Array or file dimensions disagree with the configured run."""


class CoverageError(ValueError):
    """The stitched evaluation stream has an interior timestep no horizon covers."""


class ConfigError(ValueError):
    """A run configuration key is unknown, untyped, or out of range."""
