"""Synthetic attention dumps with planted ground truth, plus the independent
brute-force oracles the acceptance suite checks the pipeline against.

The oracles deliberately share no implementation code with the pipeline:
everything here is plain Python loops over the tensor entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dump import AttentionDump, CrossAttention, PatchGrid, SelfAttentionSlice, TokenRecord
from .errors import AttnGroundError
from .evaluate import GroundTruthElement
from .grounding import (
    AllZeroMap,
    EmptyForeground,
    EmptyInput,
    GroundingConfig,
    GroundingPrediction,
    IndexOutOfRange,
)

_WORDS = ("find", "the", "target", "element", "in", "this", "view", "now", "again", "here")

# Good heads put this much of their attention mass onto the hotspot queries;
# noise heads put a smaller (but not negligible) mass onto the decoy queries.
# Majorities of noise heads then win an unfiltered mean while losing every
# per-token top-K ranking.
_GOOD_MASS = (0.90, 1.00)
_NOISE_MASS = (0.70, 0.80)
_BACKGROUND = 0.002


class InvalidSpec(AttnGroundError):
    """The synthetic fixture parameters are inconsistent."""


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for one planted fixture. ``hotspot`` is the target patch
    cell (x, y); ``noise_heads`` heads attend to a decoy cell instead."""

    seed: int
    hotspot: tuple[int, int]
    q_count: int = 8
    head_count: int = 20
    token_count: int = 4
    grid_rows: int = 8
    grid_cols: int = 8
    patch_px: int = 14
    image_w_px: int | None = None
    image_h_px: int | None = None
    signal_strength: float = 0.9
    noise_heads: int = 0

    def __post_init__(self):
        if min(self.q_count, self.head_count, self.token_count) < 1:
            raise InvalidSpec("q_count, head_count and token_count must be >= 1")
        if self.q_count < 2:
            raise InvalidSpec("need at least 2 visual queries (hotspot + decoy routing)")
        if min(self.grid_rows, self.grid_cols) < 1 or self.patch_px < 1:
            raise InvalidSpec("grid dims and patch_px must be >= 1")
        hx, hy = self.hotspot
        if not (0 <= hx < self.grid_cols and 0 <= hy < self.grid_rows):
            raise InvalidSpec(f"hotspot {self.hotspot} outside {self.grid_cols}x{self.grid_rows} grid")
        if not 0.0 < self.signal_strength <= 1.0:
            raise InvalidSpec(f"signal_strength must be in (0, 1], got {self.signal_strength}")
        if not 0 <= self.noise_heads <= self.head_count:
            raise InvalidSpec(f"noise_heads must be in [0, head_count], got {self.noise_heads}")
        if self.noise_heads > 0 and _chebyshev(self.hotspot, _decoy_cell(self)) < 2:
            raise InvalidSpec("grid too small to separate a decoy cell from the hotspot")


def _chebyshev(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def _decoy_cell(spec: SynthSpec) -> tuple[int, int]:
    """Corner cell farthest (Chebyshev) from the hotspot; first wins ties."""
    corners = [
        (0, 0),
        (spec.grid_cols - 1, 0),
        (0, spec.grid_rows - 1),
        (spec.grid_cols - 1, spec.grid_rows - 1),
    ]
    return max(corners, key=lambda c: _chebyshev(spec.hotspot, c))


def spec_for_seed(seed: int, **overrides) -> SynthSpec:
    """Default spec for a seed, with the hotspot drawn from the seed."""
    cols = overrides.get("grid_cols", 8)
    rows = overrides.get("grid_rows", 8)
    if "hotspot" not in overrides:
        rng = np.random.default_rng(seed)
        overrides["hotspot"] = (int(rng.integers(cols)), int(rng.integers(rows)))
    return SynthSpec(seed=seed, **overrides)


def _token_records(count: int) -> tuple[TokenRecord, ...]:
    records = []
    pos = 0
    for i in range(count):
        word = _WORDS[i % len(_WORDS)] + (str(i // len(_WORDS)) if i >= len(_WORDS) else "")
        text = word + (" " if i < count - 1 else "")
        records.append(TokenRecord(index=i, text=text, char_start=pos, char_end=pos + len(text)))
        pos += len(text)
    return tuple(records)


def _concentrated_row(rng: np.random.Generator, n_cells: int, peak: int) -> np.ndarray:
    row = rng.uniform(0.0, 1.0, n_cells) * _BACKGROUND
    row[peak] += 1.0
    return row / row.sum()


def generate(spec: SynthSpec) -> tuple[AttentionDump, GroundTruthElement]:
    """Deterministically build a dump where the non-noise heads route every
    token to visual queries concentrated on the hotspot cell, and noise heads
    route to a decoy corner. Ground truth is the hotspot patch rectangle."""
    rng = np.random.default_rng(spec.seed)
    rows, cols, patch = spec.grid_rows, spec.grid_cols, spec.patch_px
    image_w = spec.image_w_px if spec.image_w_px is not None else cols * patch
    image_h = spec.image_h_px if spec.image_h_px is not None else rows * patch
    grid = PatchGrid(rows_h=rows, cols_w=cols, image_w_px=image_w, image_h_px=image_h, patch_px=patch)

    hx, hy = spec.hotspot
    dx, dy = _decoy_cell(spec)
    hot_idx = grid.flat_index(hx, hy)
    decoy_idx = grid.flat_index(dx, dy)

    n_hot_q = max(1, spec.q_count // 2)
    hot_queries = list(range(n_hot_q))
    decoy_queries = list(range(n_hot_q, spec.q_count))

    n_cells = grid.cell_count
    cross = np.empty((spec.q_count, n_cells), dtype=np.float64)
    for q in range(spec.q_count):
        peak = hot_idx if q in hot_queries else decoy_idx
        cross[q] = _concentrated_row(rng, n_cells, peak)

    n, t, q_count = spec.head_count, spec.token_count, spec.q_count
    s = spec.signal_strength
    values = np.zeros((n, t, q_count), dtype=np.float64)
    for k in range(n):
        is_noise = k < spec.noise_heads
        targets = decoy_queries if is_noise else hot_queries
        lo, hi = _NOISE_MASS if is_noise else _GOOD_MASS
        for j in range(t):
            mass = s * rng.uniform(lo, hi)
            weights = rng.uniform(0.5, 1.0, len(targets))
            values[k, j, targets] = weights / weights.sum() * mass

    tokens = _token_records(t)
    dump = AttentionDump(
        cross=CrossAttention(grid=grid, values=cross),
        self_slices=SelfAttentionSlice(values=values),
        tokens=tokens,
        m_total=spec.q_count + t,
        source=(
            f"synth:seed={spec.seed},heads={n},noise_heads={spec.noise_heads},"
            f"signal={spec.signal_strength}"
        ),
    )

    bbox = (
        float(hx * patch),
        float(hy * patch),
        float(min((hx + 1) * patch, image_w)),
        float(min((hy + 1) * patch, image_h)),
    )
    g = math.gcd(image_w, image_h)
    gt = GroundTruthElement(
        sample_id=f"synth-{spec.seed}",
        image_ref=f"synth-{spec.seed}",
        query_text="".join(tok.text for tok in tokens),
        bbox_px=bbox,
        element_type="text",
        platform="other",
        aspect_ratio=f"{image_w // g}:{image_h // g}",
    )
    return dump, gt


def with_noise(spec: SynthSpec, noise_heads: int) -> SynthSpec:
    return replace(spec, noise_heads=noise_heads)


# --- independent oracles -----------------------------------------------------
#
# Everything below re-implements the pipeline contracts as naive loops for
# equivalence testing. Do not import from attnground.grounding here beyond
# the shared result/error types.

_OFFSETS = {
    4: ((1, 0), (-1, 0), (0, 1), (0, -1)),
    8: ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)),
}


def flood_fill_labels(mask: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    """Reference region labeling: row-major scan with frontier-set growth.

    Label numbering matches discovery order, like the pipeline's labeler.
    """
    if connectivity not in _OFFSETS:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    remaining = {(x, y) for y in range(h) for x in range(w) if mask[y, x]}
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    for y in range(h):
        for x in range(w):
            if (x, y) not in remaining:
                continue
            count += 1
            frontier = {(x, y)}
            remaining.discard((x, y))
            while frontier:
                cx, cy = frontier.pop()
                labels[cy, cx] = count
                for ox, oy in _OFFSETS[connectivity]:
                    nb = (cx + ox, cy + oy)
                    if nb in remaining:
                        remaining.discard(nb)
                        frontier.add(nb)
    return labels, count


def _oracle_components(
    cells: set[tuple[int, int]], connectivity: int
) -> list[set[tuple[int, int]]]:
    components = []
    remaining = set(cells)
    ordered = sorted(cells, key=lambda c: (c[1], c[0]))
    for start in ordered:
        if start not in remaining:
            continue
        comp = set()
        frontier = {start}
        remaining.discard(start)
        while frontier:
            cur = frontier.pop()
            comp.add(cur)
            for ox, oy in _OFFSETS[connectivity]:
                nb = (cur[0] + ox, cur[1] + oy)
                if nb in remaining:
                    remaining.discard(nb)
                    frontier.add(nb)
        components.append(comp)
    return components


def oracle_relevance(dump: AttentionDump, token_indices: list[int], top_k: int) -> list[list[float]]:
    """Naive-loop relevance: head scores, top-k selection, selected-head mean,
    propagation through cross-attention, and token averaging. Returns the
    overall map as nested [y][x] lists."""
    slice_vals = dump.self_slices.values
    cross_vals = dump.cross.values
    n = dump.self_slices.head_count
    q_count = dump.self_slices.q_count
    grid = dump.cross.grid
    h, w = grid.rows_h, grid.cols_w
    n_cells = h * w

    per_token_maps = []
    for j in token_indices:
        scores = []
        for k in range(n):
            total = 0.0
            for q in range(q_count):
                total += float(slice_vals[k, j, q])
            scores.append(total)
        k_eff = min(top_k, n)
        selected = sorted(range(n), key=lambda head: (-scores[head], head))[:k_eff]

        agg = []
        for q in range(q_count):
            total = 0.0
            for head in selected:
                total += float(slice_vals[head, j, q])
            agg.append(total / len(selected))

        rel = []
        for p in range(n_cells):
            total = 0.0
            for q in range(q_count):
                total += agg[q] * float(cross_vals[q, p])
            rel.append(total)
        per_token_maps.append(rel)

    t = len(token_indices)
    overall = [sum(m[p] for m in per_token_maps) / t for p in range(n_cells)]
    return [[overall[y * w + x] for x in range(w)] for y in range(h)]


def oracle_ground(
    dump: AttentionDump,
    token_indices: list[int],
    cfg: GroundingConfig = GroundingConfig(),
) -> GroundingPrediction:
    """Independent implementation of the full grounding contract."""
    indices = [int(i) for i in token_indices]
    if not indices:
        raise EmptyInput("token_indices is empty")
    for i in indices:
        if not 0 <= i < dump.self_slices.token_count:
            raise IndexOutOfRange(f"token index {i} outside [0, {dump.self_slices.token_count})")

    grid = dump.cross.grid
    h, w = grid.rows_h, grid.cols_w
    rows = oracle_relevance(dump, indices, cfg.top_k)
    vmax = max(v for row in rows for v in row)
    if vmax <= 0.0:
        raise AllZeroMap("relevance map has no strictly positive value")
    if cfg.normalize:
        rows = [[v / vmax for v in row] for row in rows]
    foreground = {(x, y) for y in range(h) for x in range(w) if rows[y][x] >= cfg.delta}
    if not foreground:
        raise EmptyForeground(f"no cell reaches delta={cfg.delta}")

    components = _oracle_components(foreground, cfg.connectivity)
    best = None
    best_mean = -math.inf
    for comp in components:
        cells = sorted(comp, key=lambda c: (c[1], c[0]))
        mean = math.fsum(rows[y][x] for x, y in cells) / len(cells)
        if mean > best_mean:
            best, best_mean = cells, mean

    patch = grid.patch_px
    if cfg.center_mode == "centroid":
        px = math.fsum((x + 0.5) * patch for x, _ in best) / len(best)
        py = math.fsum((y + 0.5) * patch for _, y in best) / len(best)
    else:
        xs = [c[0] for c in best]
        ys = [c[1] for c in best]
        px = (min(xs) * patch + min((max(xs) + 1) * patch, grid.image_w_px)) / 2.0
        py = (min(ys) * patch + min((max(ys) + 1) * patch, grid.image_h_px)) / 2.0
    px = min(max(px, 0.0), float(grid.image_w_px))
    py = min(max(py, 0.0), float(grid.image_h_px))

    return GroundingPrediction(
        point_px=(px, py),
        region_cells=frozenset(best),
        region_score=best_mean,
        num_regions=len(components),
    )


def random_dump(rng: np.random.Generator, *, max_q=8, max_heads=16, max_tokens=4, max_grid=8) -> AttentionDump:
    """Unstructured random dump for equivalence and property testing. Rows of
    the cross-attention are normalized; self-attention rows carry mass well
    under 1 so they stay valid slices."""
    q = int(rng.integers(2, max_q + 1))
    n = int(rng.integers(1, max_heads + 1))
    t = int(rng.integers(1, max_tokens + 1))
    rows = int(rng.integers(1, max_grid + 1))
    cols = int(rng.integers(1, max_grid + 1))
    patch = int(rng.integers(1, 20))
    grid = PatchGrid(rows_h=rows, cols_w=cols, image_w_px=cols * patch, image_h_px=rows * patch, patch_px=patch)

    cross = rng.uniform(0.0, 1.0, (q, grid.cell_count)) + 1e-9
    cross /= cross.sum(axis=1, keepdims=True)

    raw = rng.uniform(0.0, 1.0, (n, t, q))
    mass = rng.uniform(0.05, 0.25, (n, t))
    raw *= (mass / raw.sum(axis=2))[:, :, None]

    return AttentionDump(
        cross=CrossAttention(grid=grid, values=cross),
        self_slices=SelfAttentionSlice(values=raw),
        tokens=_token_records(t),
        source="random",
    )
