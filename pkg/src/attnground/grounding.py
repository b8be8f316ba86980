"""Core grounding math: head selection, aggregation, relevance propagation,
token averaging, and region localization on the patch grid.

All operations are pure functions over immutable inputs.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .dump import AttentionDump, CrossAttention, PatchGrid, SelfAttentionSlice
from .errors import AttnGroundError, ShapeMismatch

DEFAULT_TOP_K = 10
DEFAULT_DELTA = 0.5

CENTER_MODES = ("centroid", "bbox_center")

_NEIGHBORS = {
    4: ((1, 0), (-1, 0), (0, 1), (0, -1)),
    8: ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)),
}


class AllZeroMap(AttnGroundError):
    """Relevance map has no strictly positive value (degenerate attention)."""


class EmptyForeground(AttnGroundError):
    """No cell reaches the threshold; only possible with normalization off."""


class EmptyInput(AttnGroundError):
    """An operation received an empty collection."""


class IndexOutOfRange(AttnGroundError):
    """A token index points outside the dump's token list."""


@dataclass(frozen=True)
class GroundingConfig:
    """Pipeline knobs. top_k heads per token, threshold delta on the
    max-normalized relevance map, grid connectivity for region labeling."""

    top_k: int = DEFAULT_TOP_K
    delta: float = DEFAULT_DELTA
    connectivity: int = 4
    normalize: bool = True
    center_mode: str = "centroid"

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.connectivity not in _NEIGHBORS:
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.center_mode not in CENTER_MODES:
            raise ValueError(f"center_mode must be one of {CENTER_MODES}, got {self.center_mode!r}")


@dataclass(frozen=True, eq=False)
class HeadSelection:
    """Binary per-(head, token) weights plus the attention-mass scores that
    produced them. weights[k, j] == 1 iff head k is kept for token j."""

    weights: np.ndarray  # (N, T) uint8 in {0, 1}
    scores: np.ndarray   # (N, T) float64
    warning: str | None = None


@dataclass(frozen=True, eq=False)
class AggregatedAttention:
    """Mean attention of the selected heads, per token: shape (T, Q)."""

    per_token: np.ndarray

    def __post_init__(self):
        if (self.per_token < 0).any():
            raise ValueError("aggregated attention must be non-negative")


@dataclass(frozen=True, eq=False)
class RelevanceMap:
    """Per-patch relevance on the (rows_h, cols_w) grid, indexed [y, x]."""

    grid: PatchGrid
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.grid.rows_h, self.grid.cols_w):
            raise ShapeMismatch(
                f"relevance map shape {vals.shape} does not match grid "
                f"({self.grid.rows_h}, {self.grid.cols_w})"
            )
        if (vals < 0).any():
            raise ValueError("relevance values must be non-negative")
        vmax = float(vals.max())
        if self.normalized and vmax > 0 and abs(vmax - 1.0) > 1e-6:
            raise ValueError(f"normalized map must peak at 1, got max {vmax!r}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class GroundingPrediction:
    """Chosen region (patch cells as (x, y)) and its predicted pixel point."""

    point_px: tuple[float, float]
    region_cells: frozenset[tuple[int, int]]
    region_score: float
    num_regions: int

    def __post_init__(self):
        if not self.region_cells:
            raise ValueError("prediction must carry a non-empty region")


def select_heads(slice_: SelfAttentionSlice, k: int) -> HeadSelection:
    """Keep, per token, the k heads with the largest total attention mass onto
    the visual query tokens. Ties break toward the lower head index; k larger
    than the head count clamps with a warning recorded on the result."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = slice_.values.sum(axis=2, dtype=np.float64)  # (N, T)
    n = slice_.head_count
    warning = None
    if k > n:
        warning = f"top_k={k} exceeds head count {n}; clamped to {n}"
        k = n
    order = np.argsort(-scores, axis=0, kind="stable")
    weights = np.zeros(scores.shape, dtype=np.uint8)
    weights[order[:k, :], np.arange(scores.shape[1])] = 1
    return HeadSelection(weights=weights, scores=scores, warning=warning)


def aggregate_heads(slice_: SelfAttentionSlice, sel: HeadSelection) -> AggregatedAttention:
    """Mean attention over the selected heads, token by token."""
    n, t, _ = slice_.values.shape
    if sel.weights.shape != (n, t):
        raise ShapeMismatch(
            f"selection weights {sel.weights.shape} do not match slice heads/tokens ({n}, {t})"
        )
    counts = sel.weights.sum(axis=0).astype(np.float64)
    if (counts == 0).any():
        raise ValueError("every token needs at least one selected head")
    vals = slice_.values.astype(np.float64)
    per_token = (sel.weights.astype(np.float64)[:, :, None] * vals).sum(axis=0) / counts[:, None]
    return AggregatedAttention(per_token=per_token)


def propagate(agg: AggregatedAttention, cross: CrossAttention) -> list[RelevanceMap]:
    """Push each token's aggregated attention through the cross-attention map,
    yielding one unnormalized relevance map per token."""
    t, q = agg.per_token.shape
    if q != cross.q_count:
        raise ShapeMismatch(
            f"aggregated attention has {q} query columns, cross-attention has {cross.q_count} rows"
        )
    rel = agg.per_token @ cross.values.astype(np.float64)  # (T, H*W)
    grid = cross.grid
    return [
        RelevanceMap(grid=grid, values=rel[j].reshape(grid.rows_h, grid.cols_w))
        for j in range(t)
    ]


def average_tokens(maps: list[RelevanceMap]) -> RelevanceMap:
    """Elementwise mean over per-token relevance maps."""
    if not maps:
        raise EmptyInput("no relevance maps to average")
    grid = maps[0].grid
    for m in maps[1:]:
        if m.grid != grid:
            raise ShapeMismatch("relevance maps disagree on the patch grid")
    mean = np.stack([m.values for m in maps]).mean(axis=0)
    return RelevanceMap(grid=grid, values=mean)


def label_regions(mask: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    """Label connected foreground regions of a boolean grid.

    Labels are 1-based and follow row-major discovery order, so the region
    containing the first foreground cell in scanline order gets label 1.
    Returns (labels array, region count).
    """
    if connectivity not in _NEIGHBORS:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    offsets = _NEIGHBORS[connectivity]
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or labels[y, x]:
                continue
            count += 1
            labels[y, x] = count
            queue = deque([(x, y)])
            while queue:
                cx, cy = queue.popleft()
                for dx, dy in offsets:
                    nx, ny = cx + dx, cy + dy
                    if 0 <= nx < w and 0 <= ny < h and mask[ny, nx] and not labels[ny, nx]:
                        labels[ny, nx] = count
                        queue.append((nx, ny))
    return labels, count


def _region_center(cells: list[tuple[int, int]], grid: PatchGrid, mode: str) -> tuple[float, float]:
    p = grid.patch_px
    if mode == "centroid":
        x = math.fsum((cx + 0.5) * p for cx, _ in cells) / len(cells)
        y = math.fsum((cy + 0.5) * p for _, cy in cells) / len(cells)
    else:  # bbox_center
        xs = [c[0] for c in cells]
        ys = [c[1] for c in cells]
        x = (min(xs) * p + min((max(xs) + 1) * p, grid.image_w_px)) / 2.0
        y = (min(ys) * p + min((max(ys) + 1) * p, grid.image_h_px)) / 2.0
    x = min(max(x, 0.0), float(grid.image_w_px))
    y = min(max(y, 0.0), float(grid.image_h_px))
    return (x, y)


def localize(map_: RelevanceMap, cfg: GroundingConfig) -> GroundingPrediction:
    """Threshold the relevance map, label connected regions, pick the one with
    the highest mean relevance, and return its center in pixels.

    The map is divided by its maximum first when cfg.normalize is on, which
    guarantees a non-empty foreground for any delta < 1. Region-mean ties
    break toward the smaller label (first region in row-major scan order).
    """
    vals = map_.values
    vmax = float(vals.max())
    if vmax <= 0.0:
        raise AllZeroMap("relevance map has no strictly positive value")
    if cfg.normalize:
        vals = vals / vmax
    mask = vals >= cfg.delta
    if not mask.any():
        raise EmptyForeground(
            f"no cell reaches delta={cfg.delta}; enable normalization or lower delta"
        )
    labels, count = label_regions(mask, cfg.connectivity)
    best_label = 0
    best_mean = -math.inf
    for label in range(1, count + 1):
        mean = float(vals[labels == label].mean())
        if mean > best_mean:
            best_label, best_mean = label, mean
    cells = [(int(x), int(y)) for y, x in np.argwhere(labels == best_label)]
    cells.sort(key=lambda c: (c[1], c[0]))
    point = _region_center(cells, map_.grid, cfg.center_mode)
    return GroundingPrediction(
        point_px=point,
        region_cells=frozenset(cells),
        region_score=best_mean,
        num_regions=count,
    )


def ground(
    dump: AttentionDump,
    token_indices: list[int],
    cfg: GroundingConfig = GroundingConfig(),
) -> GroundingPrediction:
    """Full pipeline: restrict the self-attention slice to the given tokens,
    select and aggregate heads, propagate through cross-attention, average
    over tokens, and localize. Deterministic for fixed inputs."""
    indices = [int(i) for i in token_indices]
    if not indices:
        raise EmptyInput("token_indices is empty")
    t = dump.self_slices.token_count
    for i in indices:
        if not 0 <= i < t:
            raise IndexOutOfRange(f"token index {i} outside [0, {t})")
    sub = SelfAttentionSlice(values=dump.self_slices.values[:, indices, :])
    sel = select_heads(sub, cfg.top_k)
    agg = aggregate_heads(sub, sel)
    per_token = propagate(agg, dump.cross)
    overall = average_tokens(per_token)
    return localize(overall, cfg)
