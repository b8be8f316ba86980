"""Writer for the attention dump directory format.

Layout contract: ``header.json`` declares counts, the patch grid, token
records with character offsets, and per-tensor descriptors; ``tensors.bin``
holds the raw little-endian float32 payloads, cross-attention first. This is
implemented here from the format description so the extractor has no import
dependency on the grounding engine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class GridInfo:
    rows_h: int
    cols_w: int
    patch_px: int
    image_w_px: int
    image_h_px: int


@dataclass(frozen=True)
class TokenInfo:
    index: int
    text: str
    char_start: int
    char_end: int


def write_dump_dir(
    out_dir,
    *,
    cross: np.ndarray,
    self_slice: np.ndarray,
    grid: GridInfo,
    tokens: list[TokenInfo],
    m_total: int | None = None,
    source: str | None = None,
) -> Path:
    """Write ``header.json`` + ``tensors.bin``. cross is (Q, rows*cols);
    self_slice is (N, T, Q); both are cast to little-endian float32 and
    clipped into [0, 1] to absorb float32 rounding at the boundaries."""
    out_dir = Path(out_dir)
    cross = np.clip(np.asarray(cross, dtype=_F32), 0.0, 1.0)
    self_slice = np.clip(np.asarray(self_slice, dtype=_F32), 0.0, 1.0)
    q_count, n_cells = cross.shape
    head_count, token_count, q_cols = self_slice.shape
    if q_cols != q_count:
        raise ValueError(f"self slice has {q_cols} query columns, cross has {q_count} rows")
    if n_cells != grid.rows_h * grid.cols_w:
        raise ValueError(f"cross has {n_cells} columns, grid has {grid.rows_h * grid.cols_w} cells")
    if token_count != len(tokens):
        raise ValueError(f"self slice covers {token_count} tokens, {len(tokens)} records given")

    cross_bytes = cross.tobytes()
    self_bytes = self_slice.tobytes()
    header = {
        "version": 1,
        "q_count": q_count,
        "head_count": head_count,
        "token_count": token_count,
    }
    if m_total is not None:
        header["m_total"] = m_total
    header["grid"] = {
        "rows_h": grid.rows_h,
        "cols_w": grid.cols_w,
        "patch_px": grid.patch_px,
        "image_w_px": grid.image_w_px,
        "image_h_px": grid.image_h_px,
    }
    header["tokens"] = [
        {"index": t.index, "text": t.text, "char_start": t.char_start, "char_end": t.char_end}
        for t in tokens
    ]
    header["tensors"] = [
        {
            "name": "cross",
            "dtype": "f32le",
            "shape": [q_count, n_cells],
            "offset_bytes": 0,
            "length_bytes": len(cross_bytes),
        },
        {
            "name": "self",
            "dtype": "f32le",
            "shape": [head_count, token_count, q_count],
            "offset_bytes": len(cross_bytes),
            "length_bytes": len(self_bytes),
        },
    ]
    if source is not None:
        header["source"] = source

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "tensors.bin").write_bytes(cross_bytes + self_bytes)
    (out_dir / "header.json").write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    return out_dir
