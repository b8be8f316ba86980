"""Attention dump data model and its on-disk format.

A dump directory holds exactly two files: ``header.json`` describing shapes,
token records and tensor descriptors, and ``tensors.bin`` with raw
little-endian float32 payloads at the byte offsets the header declares.
Everything is validated on ingestion; the in-memory types are immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AttnGroundError, ShapeMismatch

ROW_SUM_TOL = 1e-3
RANGE_EPS = 1e-6
DUMP_VERSION = 1

_F32 = np.dtype("<f4")


class MissingFile(AttnGroundError):
    """A required dump file does not exist."""


class MalformedHeader(AttnGroundError):
    """header.json is not valid JSON or violates the header schema."""


class InvariantViolation(AttnGroundError):
    """Tensor or token contents break a declared invariant."""


class IoFailure(AttnGroundError):
    """Reading or writing dump files failed at the OS level."""


def _check_unit_range(name: str, values: np.ndarray) -> np.ndarray:
    """Reject entries outside [-eps, 1+eps], clamp the rest into [0, 1]."""
    ok = (values >= -RANGE_EPS) & (values <= 1.0 + RANGE_EPS)
    if not ok.all():
        idx = tuple(int(i) for i in np.argwhere(~ok)[0])
        raise InvariantViolation(
            f"{name}{list(idx)} = {float(values[idx])!r} is outside [0, 1]"
        )
    return np.clip(values, 0.0, 1.0)


@dataclass(frozen=True)
class PatchGrid:
    """Patch layout of an image: rows x cols cells of patch_px pixels each."""

    rows_h: int
    cols_w: int
    image_w_px: int
    image_h_px: int
    patch_px: int = 14

    def __post_init__(self):
        if min(self.rows_h, self.cols_w, self.patch_px) < 1:
            raise InvariantViolation(f"grid dims must be >= 1, got {self}")
        if not (self.rows_h * self.patch_px >= self.image_h_px > (self.rows_h - 1) * self.patch_px):
            raise InvariantViolation(
                f"{self.rows_h} rows of {self.patch_px}px do not cover image height "
                f"{self.image_h_px}px with at most one partial row"
            )
        if not (self.cols_w * self.patch_px >= self.image_w_px > (self.cols_w - 1) * self.patch_px):
            raise InvariantViolation(
                f"{self.cols_w} cols of {self.patch_px}px do not cover image width "
                f"{self.image_w_px}px with at most one partial col"
            )

    @property
    def cell_count(self) -> int:
        return self.rows_h * self.cols_w

    def flat_index(self, x: int, y: int) -> int:
        """Row-major flattening: cell (x, y) lives at column y * cols_w + x."""
        return y * self.cols_w + x


@dataclass(frozen=True)
class TokenRecord:
    """One text token with character offsets into the detokenized text."""

    index: int
    text: str
    char_start: int
    char_end: int

    def __post_init__(self):
        if not self.char_start < self.char_end:
            raise InvariantViolation(
                f"token {self.index} has empty char range [{self.char_start}, {self.char_end})"
            )


@dataclass(frozen=True, eq=False)
class CrossAttention:
    """Head-averaged attention from visual query tokens to image patches.

    ``values`` has shape (Q, rows_h * cols_w), float32, each row a stochastic
    distribution over patches in row-major grid order.
    """

    grid: PatchGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=_F32)
        if vals.ndim != 2 or vals.shape[0] < 1:
            raise ShapeMismatch(f"cross-attention must be a non-empty 2-d matrix, got shape {vals.shape}")
        if vals.shape[1] != self.grid.cell_count:
            raise ShapeMismatch(
                f"cross-attention has {vals.shape[1]} columns but grid has {self.grid.cell_count} cells"
            )
        vals = _check_unit_range("cross", vals)
        sums = vals.sum(axis=1, dtype=np.float64)
        off = np.abs(sums - 1.0) > ROW_SUM_TOL
        if off.any():
            i = int(np.argmax(off))
            raise InvariantViolation(
                f"cross row {i} sums to {sums[i]:.6f}, expected 1 +/- {ROW_SUM_TOL}"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def q_count(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CrossAttention):
            return NotImplemented
        return self.grid == other.grid and self.values.tobytes() == other.values.tobytes()


@dataclass(frozen=True, eq=False)
class SelfAttentionSlice:
    """Per-head LLM attention from selected text tokens to visual query tokens.

    ``values`` has shape (N heads, T tokens, Q queries), float32. Each
    (head, token) row is a slice of a stochastic row, so it sums to at most 1.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=_F32)
        if vals.ndim != 3 or min(vals.shape) < 1:
            raise ShapeMismatch(f"self-attention slice must be a non-empty 3-d tensor, got shape {vals.shape}")
        vals = _check_unit_range("self", vals)
        sums = vals.sum(axis=2, dtype=np.float64)
        over = sums > 1.0 + ROW_SUM_TOL
        if over.any():
            k, j = (int(i) for i in np.argwhere(over)[0])
            raise InvariantViolation(
                f"self[{k}, {j}] sums to {sums[k, j]:.6f}, expected <= 1 + {ROW_SUM_TOL}"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def head_count(self) -> int:
        return int(self.values.shape[0])

    @property
    def token_count(self) -> int:
        return int(self.values.shape[1])

    @property
    def q_count(self) -> int:
        return int(self.values.shape[2])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SelfAttentionSlice):
            return NotImplemented
        return self.values.shape == other.values.shape and self.values.tobytes() == other.values.tobytes()


@dataclass(frozen=True, eq=False)
class AttentionDump:
    """Serialized bundle: cross-attention, self-attention slice, token metadata."""

    cross: CrossAttention
    self_slices: SelfAttentionSlice
    tokens: tuple[TokenRecord, ...]
    version: int = DUMP_VERSION
    m_total: int | None = None
    source: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.self_slices.token_count != len(self.tokens):
            raise InvariantViolation(
                f"slice covers {self.self_slices.token_count} tokens but {len(self.tokens)} records given"
            )
        if self.self_slices.q_count != self.cross.q_count:
            raise ShapeMismatch(
                f"slice has {self.self_slices.q_count} query columns, cross-attention has {self.cross.q_count} rows"
            )
        prev_end = None
        for pos, tok in enumerate(self.tokens):
            if prev_end is not None and tok.char_start < prev_end:
                raise InvariantViolation(
                    f"token records overlap or are unordered at list position {pos}"
                )
            prev_end = tok.char_end

    def __eq__(self, other) -> bool:
        if not isinstance(other, AttentionDump):
            return NotImplemented
        return (
            self.version == other.version
            and self.m_total == other.m_total
            and self.source == other.source
            and self.tokens == other.tokens
            and self.cross == other.cross
            and self.self_slices == other.self_slices
        )


def _require(mapping: dict, key: str, kind, where: str):
    if key not in mapping:
        raise MalformedHeader(f"{where} is missing required key {key!r}")
    value = mapping[key]
    if kind is int and isinstance(value, bool):
        raise MalformedHeader(f"{where}[{key!r}] must be {kind.__name__}, got bool")
    if not isinstance(value, kind):
        raise MalformedHeader(
            f"{where}[{key!r}] must be {getattr(kind, '__name__', kind)}, got {type(value).__name__}"
        )
    return value


def _parse_tokens(raw: list) -> tuple[TokenRecord, ...]:
    records = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise MalformedHeader(f"tokens[{i}] must be an object")
        records.append(
            TokenRecord(
                index=_require(entry, "index", int, f"tokens[{i}]"),
                text=_require(entry, "text", str, f"tokens[{i}]"),
                char_start=_require(entry, "char_start", int, f"tokens[{i}]"),
                char_end=_require(entry, "char_end", int, f"tokens[{i}]"),
            )
        )
    return tuple(records)


def read_dump(path) -> AttentionDump:
    """Read and fully validate an attention dump directory.

    Raises MissingFile, MalformedHeader, ShapeMismatch or InvariantViolation,
    reporting the first offending index where applicable.
    """
    path = Path(path)
    header_path = path / "header.json"
    tensor_path = path / "tensors.bin"
    for p in (header_path, tensor_path):
        if not p.is_file():
            raise MissingFile(str(p))
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {header_path}: {exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedHeader(f"{header_path} is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeader("header must be a JSON object")

    version = _require(header, "version", int, "header")
    if version != DUMP_VERSION:
        raise MalformedHeader(f"unsupported dump version {version}")
    q_count = _require(header, "q_count", int, "header")
    head_count = _require(header, "head_count", int, "header")
    token_count = _require(header, "token_count", int, "header")
    m_total = header.get("m_total")
    if m_total is not None and (isinstance(m_total, bool) or not isinstance(m_total, int)):
        raise MalformedHeader("header['m_total'] must be an integer when present")
    source = header.get("source")
    if source is not None and not isinstance(source, str):
        raise MalformedHeader("header['source'] must be a string when present")

    graw = _require(header, "grid", dict, "header")
    grid = PatchGrid(
        rows_h=_require(graw, "rows_h", int, "grid"),
        cols_w=_require(graw, "cols_w", int, "grid"),
        image_w_px=_require(graw, "image_w_px", int, "grid"),
        image_h_px=_require(graw, "image_h_px", int, "grid"),
        patch_px=_require(graw, "patch_px", int, "grid"),
    )

    tokens = _parse_tokens(_require(header, "tokens", list, "header"))
    if len(tokens) != token_count:
        raise MalformedHeader(
            f"header declares token_count={token_count} but lists {len(tokens)} token records"
        )

    descriptors = _require(header, "tensors", list, "header")
    by_name: dict[str, dict] = {}
    for i, entry in enumerate(descriptors):
        if not isinstance(entry, dict):
            raise MalformedHeader(f"tensors[{i}] must be an object")
        name = _require(entry, "name", str, f"tensors[{i}]")
        if name not in ("cross", "self"):
            raise MalformedHeader(f"unknown tensor name {name!r}")
        if name in by_name:
            raise MalformedHeader(f"duplicate tensor descriptor for {name!r}")
        if _require(entry, "dtype", str, f"tensors[{i}]") != "f32le":
            raise MalformedHeader(f"tensors[{i}] dtype must be 'f32le'")
        by_name[name] = entry
    for name in ("cross", "self"):
        if name not in by_name:
            raise MalformedHeader(f"missing tensor descriptor for {name!r}")

    try:
        payload = tensor_path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {tensor_path}: {exc}") from exc

    expected_shapes = {
        "cross": [q_count, grid.cell_count],
        "self": [head_count, token_count, q_count],
    }
    spans = []
    arrays: dict[str, np.ndarray] = {}
    for name, entry in by_name.items():
        shape = _require(entry, "shape", list, f"tensor {name!r}")
        offset = _require(entry, "offset_bytes", int, f"tensor {name!r}")
        length = _require(entry, "length_bytes", int, f"tensor {name!r}")
        if shape != expected_shapes[name]:
            raise ShapeMismatch(
                f"tensor {name!r} declares shape {shape}, header counts imply {expected_shapes[name]}"
            )
        n_items = int(np.prod(shape, dtype=np.int64))
        if length != n_items * _F32.itemsize:
            raise ShapeMismatch(
                f"tensor {name!r} declares {length} bytes for shape {shape} "
                f"({n_items * _F32.itemsize} expected)"
            )
        if offset < 0 or offset + length > len(payload):
            raise ShapeMismatch(
                f"tensor {name!r} spans [{offset}, {offset + length}) but payload is {len(payload)} bytes"
            )
        spans.append((offset, length))
        arrays[name] = np.frombuffer(payload, dtype=_F32, count=n_items, offset=offset).reshape(shape)

    spans.sort()
    cursor = 0
    for offset, length in spans:
        if offset != cursor:
            raise ShapeMismatch(
                f"tensor payloads do not tile the file: gap or overlap at byte {cursor}"
            )
        cursor += length
    if cursor != len(payload):
        raise ShapeMismatch(
            f"tensors.bin has {len(payload)} bytes but descriptors cover {cursor}"
        )

    return AttentionDump(
        cross=CrossAttention(grid=grid, values=arrays["cross"]),
        self_slices=SelfAttentionSlice(values=arrays["self"]),
        tokens=tokens,
        version=version,
        m_total=m_total,
        source=source,
    )


def write_dump(dump: AttentionDump, path) -> None:
    """Write a dump directory with the bit-exact layout read_dump expects."""
    path = Path(path)
    cross_bytes = dump.cross.values.tobytes()
    self_bytes = dump.self_slices.values.tobytes()
    header = {
        "version": dump.version,
        "q_count": dump.cross.q_count,
        "head_count": dump.self_slices.head_count,
        "token_count": dump.self_slices.token_count,
    }
    if dump.m_total is not None:
        header["m_total"] = dump.m_total
    grid = dump.cross.grid
    header["grid"] = {
        "rows_h": grid.rows_h,
        "cols_w": grid.cols_w,
        "patch_px": grid.patch_px,
        "image_w_px": grid.image_w_px,
        "image_h_px": grid.image_h_px,
    }
    header["tokens"] = [
        {"index": t.index, "text": t.text, "char_start": t.char_start, "char_end": t.char_end}
        for t in dump.tokens
    ]
    header["tensors"] = [
        {
            "name": "cross",
            "dtype": "f32le",
            "shape": [dump.cross.q_count, grid.cell_count],
            "offset_bytes": 0,
            "length_bytes": len(cross_bytes),
        },
        {
            "name": "self",
            "dtype": "f32le",
            "shape": list(dump.self_slices.values.shape),
            "offset_bytes": len(cross_bytes),
            "length_bytes": len(self_bytes),
        },
    ]
    if dump.source is not None:
        header["source"] = dump.source
    try:
        path.mkdir(parents=True, exist_ok=True)
        (path / "tensors.bin").write_bytes(cross_bytes + self_bytes)
        (path / "header.json").write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write dump to {path}: {exc}") from exc
