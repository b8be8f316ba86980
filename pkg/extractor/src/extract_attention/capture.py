"""Extraction orchestration: load a model, run one prompted inference with
greedy decoding, capture both attention surfaces, and write a dump directory.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import templates, tokenizer
from .model import ToyConfig, ToyMultimodalLM
from .writer import GridInfo, TokenInfo, write_dump_dir


class ModelLoadFailure(Exception):
    """The model identifier is unknown or the model cannot be constructed."""


class AttentionUnavailable(Exception):
    """The model ran but did not expose the attention weights needed."""


class OutOfMemory(Exception):
    """Inference exceeded available memory; retry with a smaller image."""


@dataclass(frozen=True)
class ExtractorConfig:
    model: str
    image: str
    query: str
    out_dir: str
    template: str = "grounding"
    max_new_tokens: int = 12
    history: str = "None"

    def __post_init__(self):
        if self.template not in templates.TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; choose from {sorted(templates.TEMPLATES)}")


def load_model(identifier: str) -> ToyMultimodalLM:
    """Models are addressed as 'toy' or 'toy:<seed>'. The toy model is a
    seeded random-weight multimodal LM built in-process; real checkpoints
    would slot in behind the same capture calls."""
    m = re.fullmatch(r"toy(?::(\d+))?", identifier.strip())
    if not m:
        raise ModelLoadFailure(
            f"unknown model {identifier!r}; available: 'toy' or 'toy:<seed>'"
        )
    seed = int(m.group(1)) if m.group(1) else 0
    return ToyMultimodalLM(ToyConfig(seed=seed))


def _load_pixels(path, patch_px: int) -> tuple[torch.Tensor, GridInfo]:
    """Load an image and zero-pad it to patch multiples; the grid keeps the
    original pixel dimensions so point predictions land in image space."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
    except OSError as exc:
        raise ModelLoadFailure(f"cannot load image {path}: {exc}") from exc
    width, height = rgb.size
    rows = math.ceil(height / patch_px)
    cols = math.ceil(width / patch_px)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    padded = np.zeros((rows * patch_px, cols * patch_px, 3), dtype=np.float32)
    padded[:height, :width] = arr
    pixels = torch.from_numpy(padded).permute(2, 0, 1).unsqueeze(0)
    grid = GridInfo(rows_h=rows, cols_w=cols, patch_px=patch_px,
                    image_w_px=width, image_h_px=height)
    return pixels, grid


def extract(config: ExtractorConfig) -> Path:
    """Run one inference and write the dump. Deterministic: seeded weights,
    single-threaded math, greedy decoding."""
    torch.set_num_threads(1)
    model = load_model(config.model)
    pixels, grid = _load_pixels(config.image, model.cfg.patch_px)
    prompt = templates.render(config.template, config.query, config.history)

    try:
        visual_tokens, cross = model.compress_image(pixels)
        prompt_ids = tokenizer.encode(prompt)
        ids = model.greedy_generate(visual_tokens, prompt_ids, config.max_new_tokens)
        _, attentions = model.forward_sequence(visual_tokens, ids)
    except torch.cuda.OutOfMemoryError as exc:  # pragma: no cover
        raise OutOfMemory(
            "inference ran out of memory; reduce the image resolution and retry"
        ) from exc
    if cross is None or not attentions or any(a is None for a in attentions):
        raise AttentionUnavailable("model forward did not return attention weights")

    q = model.cfg.q_count
    text_len = len(ids)
    # stack (layers, heads, L, L) -> slice text rows x visual columns
    stacked = torch.cat([a.squeeze(0) for a in attentions], dim=0)  # (N, L, L)
    self_slice = stacked[:, q : q + text_len, :q].numpy()

    full_text = tokenizer.decode(ids)
    tokens = [
        TokenInfo(index=i, text=full_text[i], char_start=i, char_end=i + 1)
        for i in range(len(full_text))
    ]
    return write_dump_dir(
        config.out_dir,
        cross=cross.numpy(),
        self_slice=self_slice,
        grid=grid,
        tokens=tokens,
        m_total=q + text_len,
        source=f"extract_attention model={config.model} template={config.template} greedy",
    )
