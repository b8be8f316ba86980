#!/usr/bin/env python3
"""End-to-end demo of the OCG dataset builder.

Renders a fake homepage screenshot with labeled text blocks, writes the
matching OCR annotations, and builds ground-truth JSONL files at the ten
standard aspect ratios.
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

from PIL import Image, ImageDraw

RATIOS = "1:4,9:21,9:19,1:2,9:16,4:3,16:9,2:1,21:9,4:1"


def render_screenshot(path: Path, width=1280, height=2400, n_rows=40):
    img = Image.new("RGB", (width, height), "white")
    draw = ImageDraw.Draw(img)
    ocr = []
    for i in range(n_rows):
        x0 = 40 + (i % 3) * 400
        y0 = 30 + i * 58
        text = f"menu item {i}"
        x1, y1 = x0 + 12 * len(text), y0 + 22
        draw.rectangle((x0 - 4, y0 - 4, x1 + 4, y1 + 4), outline="gray")
        draw.text((x0, y0), text, fill="black")
        ocr.append({"text": text, "bbox": [x0, y0, x1, y1]})
    img.save(path)
    path.with_suffix(".json").write_text(json.dumps(ocr, indent=2))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("ocg_demo"))
    parser.add_argument("--screens", type=int, default=3)
    args = parser.parse_args()

    screens = args.out_dir / "screens"
    screens.mkdir(parents=True, exist_ok=True)
    for i in range(args.screens):
        render_screenshot(screens / f"page{i}.png", height=2000 + 400 * i)

    subprocess.run(
        [
            sys.executable, "-m", "attnground.cli", "ocg-build",
            "--screens", str(screens), "--ratios", RATIOS,
            "--out-dir", str(args.out_dir / "dataset"),
        ],
        check=True,
    )
    print(f"\ndataset under {args.out_dir / 'dataset'}/")


if __name__ == "__main__":
    main()
