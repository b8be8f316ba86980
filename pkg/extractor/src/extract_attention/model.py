"""A small self-contained multimodal LM with exposable attention.

Architecture mirrors the compress-then-fuse pattern: a conv patch embedder,
a cross-attention token compressor squeezing the patch sequence into a fixed
set of visual query tokens, and a causal transformer over
[visual tokens, text tokens]. Weights are random but seeded, and decoding is
greedy, so every extraction is reproducible. Both attention surfaces are
returned from forward passes rather than hidden inside fused kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from . import tokenizer


@dataclass(frozen=True)
class ToyConfig:
    seed: int = 0
    dim: int = 32
    n_layers: int = 2
    n_heads: int = 4
    q_count: int = 16
    patch_px: int = 14
    max_positions: int = 512


class Block(nn.Module):
    def __init__(self, cfg: ToyConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.attn = nn.MultiheadAttention(cfg.dim, cfg.n_heads, batch_first=True)
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.mlp = nn.Sequential(
            nn.Linear(cfg.dim, 4 * cfg.dim),
            nn.GELU(),
            nn.Linear(4 * cfg.dim, cfg.dim),
        )

    def forward(self, x, attn_mask):
        h = self.ln1(x)
        out, weights = self.attn(
            h, h, h, attn_mask=attn_mask, need_weights=True, average_attn_weights=False
        )
        x = x + out
        x = x + self.mlp(self.ln2(x))
        return x, weights  # weights: (1, n_heads, L, L)


class ToyMultimodalLM(nn.Module):
    """Vision patches -> compressed visual queries -> causal LM over text."""

    def __init__(self, cfg: ToyConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.patch_embed = nn.Conv2d(3, cfg.dim, kernel_size=cfg.patch_px, stride=cfg.patch_px)
        self.visual_queries = nn.Parameter(torch.randn(cfg.q_count, cfg.dim) / math.sqrt(cfg.dim))
        self.compressor = nn.MultiheadAttention(cfg.dim, cfg.n_heads, batch_first=True)
        self.tok_embed = nn.Embedding(tokenizer.vocab_size(), cfg.dim)
        self.pos_embed = nn.Embedding(cfg.max_positions, cfg.dim)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.dim)
        self.lm_head = nn.Linear(cfg.dim, tokenizer.vocab_size())
        self.eval()

    @property
    def head_count(self) -> int:
        return self.cfg.n_layers * self.cfg.n_heads

    @torch.no_grad()
    def compress_image(self, pixels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Compress (1, 3, H, W) pixels (H, W multiples of patch_px) into
        visual query tokens. Returns (tokens (1, Q, dim), head-averaged
        cross-attention (Q, n_patches))."""
        patches = self.patch_embed(pixels)  # (1, dim, rows, cols)
        patches = patches.flatten(2).transpose(1, 2)  # (1, rows*cols, dim)
        queries = self.visual_queries.unsqueeze(0)
        tokens, weights = self.compressor(
            queries, patches, patches, need_weights=True, average_attn_weights=True
        )
        return tokens, weights.squeeze(0)

    @torch.no_grad()
    def forward_sequence(
        self, visual_tokens: torch.Tensor, text_ids: list[int]
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Causal forward over [visual tokens, text tokens]. Returns logits
        (1, L, vocab) and per-layer per-head attention maps (1, heads, L, L)."""
        ids = torch.tensor([text_ids], dtype=torch.long)
        text = self.tok_embed(ids)
        x = torch.cat([visual_tokens, text], dim=1)
        length = x.shape[1]
        if length > self.cfg.max_positions:
            raise ValueError(f"sequence length {length} exceeds {self.cfg.max_positions}")
        x = x + self.pos_embed(torch.arange(length)).unsqueeze(0)
        mask = torch.triu(torch.full((length, length), float("-inf")), diagonal=1)
        attentions = []
        for block in self.blocks:
            x, weights = block(x, mask)
            attentions.append(weights)
        logits = self.lm_head(self.ln_f(x))
        return logits, attentions

    @torch.no_grad()
    def greedy_generate(
        self, visual_tokens: torch.Tensor, prompt_ids: list[int], max_new_tokens: int
    ) -> list[int]:
        ids = list(prompt_ids)
        for _ in range(max_new_tokens):
            logits, _ = self.forward_sequence(visual_tokens, ids)
            ids.append(int(logits[0, -1].argmax()))
        return ids
