"""Descriptive token selection: map a description string onto the minimal
contiguous run of token records whose character ranges cover it.

Matching happens on detokenized text with whitespace runs collapsed, so the
result is independent of how a subword tokenizer happened to split the text.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dump import TokenRecord
from .errors import AttnGroundError

_QUOTE_CHARS = "\"'`“”‘’«»"


class NotFound(AttnGroundError):
    """The description does not occur in the detokenized token text.

    Recoverable: callers may fall back to grounding with all tokens.
    """


class OffsetInconsistency(AttnGroundError):
    """Token character offsets do not line up with the concatenated texts."""


@dataclass(frozen=True)
class TokenSpan:
    """A contiguous run of token list positions covering a matched string."""

    token_indices: tuple[int, ...]
    matched_text: str
    char_range: tuple[int, int]


def detokenize(tokens: list[TokenRecord]) -> str:
    """Concatenate token texts, checking each record's offsets against its
    actual position in the output."""
    pos = 0
    parts = []
    for i, tok in enumerate(tokens):
        if tok.char_start != pos:
            raise OffsetInconsistency(
                f"token at list position {i} starts at char {tok.char_start}, expected {pos}"
            )
        if tok.char_end - tok.char_start != len(tok.text):
            raise OffsetInconsistency(
                f"token at list position {i} spans {tok.char_end - tok.char_start} chars "
                f"but its text has {len(tok.text)}"
            )
        parts.append(tok.text)
        pos = tok.char_end
    return "".join(parts)


def _collapse_whitespace(text: str) -> tuple[str, list[int]]:
    """Collapse whitespace runs to single spaces; also return, per output
    char, the index of the original char it came from."""
    out: list[str] = []
    origin: list[int] = []
    for i, ch in enumerate(text):
        if ch.isspace():
            if out and out[-1] == " ":
                continue
            out.append(" ")
        else:
            out.append(ch)
        origin.append(i)
    return "".join(out), origin


def _normalize_description(description: str) -> str:
    desc = description.strip()
    while len(desc) >= 2 and desc[0] in _QUOTE_CHARS and desc[-1] in _QUOTE_CHARS:
        desc = desc[1:-1].strip()
    collapsed, _ = _collapse_whitespace(desc)
    return collapsed


def select_span(tokens: list[TokenRecord], description: str) -> TokenSpan:
    """Find the first occurrence of the description in the detokenized text
    and return the minimal contiguous token run covering it.

    Matching is case-sensitive after collapsing whitespace runs and stripping
    quotes surrounding the description. Raises NotFound when absent.
    """
    if not tokens:
        raise NotFound("no tokens to search")
    text = detokenize(tokens)
    needle = _normalize_description(description)
    if not needle:
        raise NotFound("description is empty after normalization")
    haystack, origin = _collapse_whitespace(text)
    pos = haystack.find(needle)
    if pos < 0:
        raise NotFound(f"description {description!r} not found in token text")
    start = origin[pos]
    end = origin[pos + len(needle) - 1] + 1
    covering = [
        i for i, tok in enumerate(tokens)
        if tok.char_end > start and tok.char_start < end
    ]
    return TokenSpan(
        token_indices=tuple(covering),
        matched_text=text[start:end],
        char_range=(start, end),
    )
