"""Attention extraction: run a multimodal LM and write attention dumps."""

from .capture import (
    AttentionUnavailable,
    ExtractorConfig,
    ModelLoadFailure,
    OutOfMemory,
    extract,
    load_model,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionUnavailable",
    "ExtractorConfig",
    "ModelLoadFailure",
    "OutOfMemory",
    "extract",
    "load_model",
]
