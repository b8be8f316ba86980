"""Character-level tokenizer: one printable ASCII char per token.

Keeps token records trivially aligned with character offsets, which is all
the dump format needs from a tokenizer.
"""

VOCAB = [chr(c) for c in range(32, 127)]
_ID = {ch: i for i, ch in enumerate(VOCAB)}
_FALLBACK = _ID[" "]


def encode(text: str) -> list[int]:
    return [_ID.get(ch, _FALLBACK) for ch in text]


def decode(ids: list[int]) -> str:
    return "".join(VOCAB[i] for i in ids)


def vocab_size() -> int:
    return len(VOCAB)
