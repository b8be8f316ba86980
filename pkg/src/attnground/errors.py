"""Shared exception types."""


class AttnGroundError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(AttnGroundError):
    """Tensor shapes disagree with each other or with declared metadata."""
