"""Attention-driven GUI grounding engine.

Consumes serialized attention dumps extracted from a multimodal LLM,
localizes GUI elements on the patch grid via head selection, attention
aggregation and relevance propagation, and evaluates grounding accuracy.
"""

from .dump import (
    AttentionDump,
    CrossAttention,
    PatchGrid,
    SelfAttentionSlice,
    TokenRecord,
    read_dump,
    write_dump,
)
from .errors import AttnGroundError, ShapeMismatch
from .grounding import (
    GroundingConfig,
    GroundingPrediction,
    RelevanceMap,
    aggregate_heads,
    average_tokens,
    ground,
    localize,
    propagate,
    select_heads,
)
from .tokens import TokenSpan, detokenize, select_span

__version__ = "0.1.0"

__all__ = [
    "AttentionDump",
    "AttnGroundError",
    "CrossAttention",
    "GroundingConfig",
    "GroundingPrediction",
    "PatchGrid",
    "RelevanceMap",
    "SelfAttentionSlice",
    "ShapeMismatch",
    "TokenRecord",
    "TokenSpan",
    "aggregate_heads",
    "average_tokens",
    "detokenize",
    "ground",
    "localize",
    "propagate",
    "read_dump",
    "select_heads",
    "select_span",
    "write_dump",
]
