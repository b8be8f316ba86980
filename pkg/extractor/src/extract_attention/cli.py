"""CLI: run a model with attention capture and write a dump directory."""

from __future__ import annotations

import argparse
import sys

from . import templates
from .capture import AttentionUnavailable, ExtractorConfig, ModelLoadFailure, OutOfMemory, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract_attention",
        description=(
            "Run a multimodal LM on one image + query with attention outputs "
            "enabled and write an attention dump directory (header.json + "
            "tensors.bin) for the grounding engine."
        ),
    )
    parser.add_argument("--model", required=True, help="model identifier ('toy' or 'toy:<seed>')")
    parser.add_argument("--image", required=True, help="input screenshot")
    parser.add_argument("--query", required=True, help="query text placed into the prompt template")
    parser.add_argument("--template", choices=sorted(templates.TEMPLATES), default="grounding")
    parser.add_argument("--history", default="None", help="action history for the agent template")
    parser.add_argument("--max-new-tokens", type=int, default=12)
    parser.add_argument("--out", required=True, help="dump directory to write")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ExtractorConfig(
        model=args.model,
        image=args.image,
        query=args.query,
        out_dir=args.out,
        template=args.template,
        max_new_tokens=args.max_new_tokens,
        history=args.history,
    )
    try:
        out = extract(config)
    except (ModelLoadFailure, AttentionUnavailable, OutOfMemory) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    print(f"wrote dump {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
