#!/usr/bin/env python3
"""Ablation experiment on synthetic fixtures: accuracy vs top-K and vs delta.

Generates a suite of planted-noise dumps, then sweeps the head-selection K
and the binarization threshold through the CLI, leaving two CSVs ready for
plotting.
"""

import argparse
import subprocess
import sys
from pathlib import Path


def run(*args):
    cmd = [sys.executable, "-m", "attnground.cli", *[str(a) for a in args]]
    print("+", " ".join(cmd[2:]))
    subprocess.run(cmd, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("sweep_out"))
    parser.add_argument("--seeds", type=int, default=50)
    parser.add_argument("--heads", type=int, default=20)
    parser.add_argument("--noise-heads", type=int, default=12)
    args = parser.parse_args()

    fixtures = args.out_dir / "fixtures"
    run(
        "synth", "--seed", 0, "--count", args.seeds, "--out", fixtures,
        "--heads", args.heads, "--noise-heads", args.noise_heads,
    )

    k_values = sorted({1, 2, 4, 8, 10, 12, 16, args.heads})
    run(
        "sweep", "--manifest", fixtures / "manifest.jsonl", "--gt", fixtures / "gt.jsonl",
        "--top-k-list", ",".join(str(k) for k in k_values),
        "--out", args.out_dir / "sweep_top_k.csv",
    )
    run(
        "sweep", "--manifest", fixtures / "manifest.jsonl", "--gt", fixtures / "gt.jsonl",
        "--top-k", 8,
        "--delta-list", ",".join(f"{d / 10:.1f}" for d in range(1, 10)),
        "--out", args.out_dir / "sweep_delta.csv",
    )
    print(f"\nCSV results under {args.out_dir}/")


if __name__ == "__main__":
    main()
