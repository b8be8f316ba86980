import subprocess
import sys

import numpy as np
import pytest

from attnground.dump import AttentionDump, CrossAttention, PatchGrid, SelfAttentionSlice, TokenRecord


def run_cli(*args, env=None, cwd=None):
    """Run the CLI in a subprocess and return the completed process."""
    return subprocess.run(
        [sys.executable, "-m", "attnground.cli", *[str(a) for a in args]],
        capture_output=True,
        text=True,
        env=env,
        cwd=cwd,
    )


def tiny_dump(q=2, heads=2, tokens=1, rows=2, cols=2, patch=14) -> AttentionDump:
    """Smallest well-formed dump: uniform rows everywhere."""
    grid = PatchGrid(rows_h=rows, cols_w=cols, image_w_px=cols * patch, image_h_px=rows * patch, patch_px=patch)
    cross = np.full((q, grid.cell_count), 1.0 / grid.cell_count)
    slice_ = np.full((heads, tokens, q), 1.0 / (2 * q))
    records = tuple(
        TokenRecord(index=i, text=f"t{i} ", char_start=3 * i, char_end=3 * i + 3)
        for i in range(tokens)
    )
    return AttentionDump(
        cross=CrossAttention(grid=grid, values=cross),
        self_slices=SelfAttentionSlice(values=slice_),
        tokens=records,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
