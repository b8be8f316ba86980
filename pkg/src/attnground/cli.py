"""Command-line surface: grounding, evaluation, sweeps, dataset building,
and synthetic fixtures.

Exit codes: 0 success, 2 usage error, 3 description not found (a fallback
prediction over all tokens is still written), 4 data/dump errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import evaluate as ev
from . import ocg
from . import synth
from .dump import read_dump, write_dump
from .errors import AttnGroundError
from .grounding import GroundingConfig, ground
from .tokens import NotFound, select_span

THREADS_ENV = "ATTNGROUND_THREADS"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_FOUND = 3
EXIT_DATA = 4


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def _parse_token_spec(spec: str) -> list[int]:
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in spec.split(",") if part.strip()]


def _grounding_config(args, parser: argparse.ArgumentParser) -> GroundingConfig:
    try:
        return GroundingConfig(
            top_k=args.top_k,
            delta=args.delta,
            connectivity=args.connectivity,
            normalize=not args.no_normalize,
        )
    except ValueError as exc:
        parser.error(str(exc))


def _prediction_meta(pred, token_indices: list[int], fallback: bool) -> dict:
    return {
        "region_score": pred.region_score,
        "num_regions": pred.num_regions,
        "fallback": fallback,
        "token_indices": list(token_indices),
    }


def _resolve_tokens(dump, args) -> tuple[list[int], bool]:
    """Token indices to ground; second value flags a NotFound fallback."""
    if args.tokens:
        return _parse_token_spec(args.tokens), False
    if args.description:
        try:
            span = select_span(list(dump.tokens), args.description)
            return list(span.token_indices), False
        except NotFound:
            return list(range(dump.self_slices.token_count)), True
    return list(range(dump.self_slices.token_count)), False


def cmd_ground(args, parser) -> int:
    cfg = _grounding_config(args, parser)
    dump = read_dump(args.dump)
    indices, fallback = _resolve_tokens(dump, args)
    pred = ground(dump, indices, cfg)
    sample_id = args.sample_id or Path(args.dump).name
    record = ev.Prediction(
        sample_id=sample_id,
        point_px=pred.point_px,
        meta=_prediction_meta(pred, indices, fallback),
    )
    if args.out:
        Path(args.out).write_text(
            json.dumps(ev.pred_to_dict(record), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    print(f"{pred.point_px[0]} {pred.point_px[1]}")
    return EXIT_NOT_FOUND if fallback else EXIT_OK


def cmd_eval(args, parser) -> int:
    preds = ev.read_predictions(args.preds)
    gts = ev.read_ground_truth(args.gt)
    report = ev.evaluate(preds, gts, group_by=args.group_by)
    print(report.render_table())
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def _load_manifest(path) -> list[dict]:
    base = Path(path).parent
    entries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            entry = {
                "sample_id": raw["sample_id"],
                "dump": base / raw["dump"],
                "description": raw.get("description"),
                "tokens": raw.get("tokens"),
            }
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ev.InvalidRecord(f"manifest line {lineno}: {exc}") from exc
        entries.append(entry)
    return entries


def _ground_entry(entry: dict, cfg: GroundingConfig) -> ev.Prediction:
    dump = read_dump(entry["dump"])
    fallback = False
    if entry.get("tokens"):
        indices = [int(i) for i in entry["tokens"]]
    elif entry.get("description"):
        try:
            indices = list(select_span(list(dump.tokens), entry["description"]).token_indices)
        except NotFound:
            indices = list(range(dump.self_slices.token_count))
            fallback = True
    else:
        indices = list(range(dump.self_slices.token_count))
    pred = ground(dump, indices, cfg)
    return ev.Prediction(
        sample_id=entry["sample_id"],
        point_px=pred.point_px,
        meta=_prediction_meta(pred, indices, fallback),
    )


def _ground_batch(entries: list[dict], cfg: GroundingConfig) -> list[ev.Prediction]:
    workers = thread_count()
    if workers == 1 or len(entries) <= 1:
        return [_ground_entry(e, cfg) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda e: _ground_entry(e, cfg), entries))


def cmd_sweep(args, parser) -> int:
    base = _grounding_config(args, parser)
    k_list = [int(v) for v in args.top_k_list.split(",")] if args.top_k_list else []
    d_list = [float(v) for v in args.delta_list.split(",")] if args.delta_list else []
    if not k_list and not d_list:
        parser.error("sweep needs --top-k-list and/or --delta-list")
    entries = _load_manifest(args.manifest)
    gts = ev.read_ground_truth(args.gt)

    runs = [("top_k", v) for v in k_list] + [("delta", v) for v in d_list]
    rows = []
    for param, value in runs:
        try:
            cfg = GroundingConfig(
                top_k=value if param == "top_k" else base.top_k,
                delta=value if param == "delta" else base.delta,
                connectivity=base.connectivity,
                normalize=base.normalize,
            )
        except ValueError as exc:
            parser.error(str(exc))
        preds = _ground_batch(entries, cfg)
        report = ev.evaluate(preds, gts, group_by="none")
        rows.append(
            (param, value, report.overall.correct, report.overall.total, report.overall.accuracy)
        )

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "value", "correct", "total", "accuracy"])
        for param, value, correct, total, acc in rows:
            writer.writerow([param, value, correct, total, f"{acc:.6f}"])
    for param, value, correct, total, acc in rows:
        print(f"{param}={value}: {correct}/{total} = {100 * acc:.1f}%")
    return EXIT_OK


def cmd_ocg_build(args, parser) -> int:
    try:
        ratios = [ocg.parse_ratio(r) for r in args.ratios.split(",")]
    except ValueError as exc:
        parser.error(str(exc))
    stats = ocg.build_dataset(args.screens, ratios, args.out_dir)
    print(ocg.render_stats_table(stats))
    return EXIT_OK


def _parse_grid(text: str) -> tuple[int, int]:
    cols, rows = text.lower().split("x", 1)
    return int(cols), int(rows)


def cmd_synth(args, parser) -> int:
    overrides = dict(
        q_count=args.q_count,
        head_count=args.heads,
        token_count=args.tokens,
        patch_px=args.patch,
        signal_strength=args.signal,
        noise_heads=args.noise_heads,
    )
    if args.grid:
        cols, rows = _parse_grid(args.grid)
        overrides.update(grid_cols=cols, grid_rows=rows)
    if args.hotspot:
        x, y = (int(v) for v in args.hotspot.split(","))
        overrides["hotspot"] = (x, y)

    out = Path(args.out)
    if args.count is None:
        dump, gt = synth.generate(synth.spec_for_seed(args.seed, **overrides))
        write_dump(dump, out)
        ev.write_ground_truth([gt], out / "gt.jsonl")
        print(f"wrote dump {out}")
        return EXIT_OK

    out.mkdir(parents=True, exist_ok=True)
    gts = []
    manifest_lines = []
    for seed in range(args.seed, args.seed + args.count):
        dump, gt = synth.generate(synth.spec_for_seed(seed, **overrides))
        rel = f"seed_{seed}"
        write_dump(dump, out / rel)
        gts.append(gt)
        manifest_lines.append(
            json.dumps(
                {"sample_id": gt.sample_id, "dump": rel, "description": gt.query_text},
                sort_keys=True,
            )
        )
    ev.write_ground_truth(gts, out / "gt.jsonl")
    (out / "manifest.jsonl").write_text(
        "".join(line + "\n" for line in manifest_lines), encoding="utf-8"
    )
    print(f"wrote {args.count} dumps under {out}")
    return EXIT_OK


def cmd_parse_box(args, parser) -> int:
    bbox, center = ev.parse_box(args.text, args.width, args.height)
    print(json.dumps({"box": list(bbox), "center": list(center)}))
    return EXIT_OK


def _add_grounding_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--top-k", type=int, default=10, help="heads kept per token (default 10)")
    p.add_argument("--delta", type=float, default=0.5, help="relevance threshold in (0,1) (default 0.5)")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=4)
    p.add_argument("--no-normalize", action="store_true", help="skip max-normalization before thresholding")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnground",
        description=(
            "Attention-driven GUI grounding over serialized attention dumps. "
            "A dump directory holds header.json (shapes, token records, tensor "
            "descriptors) and tensors.bin (raw little-endian float32 payloads)."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground", help="localize one dump and write a prediction")
    p.add_argument("--dump", required=True, help="dump directory")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--description", help="description string to match against the token text")
    group.add_argument("--tokens", help="token indices, e.g. '2..5' or '0,3'")
    _add_grounding_flags(p)
    p.add_argument("--sample-id", help="sample id for the prediction record (default: dump dir name)")
    p.add_argument("--out", help="write the prediction JSON here")
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--preds", required=True, help="prediction JSONL")
    p.add_argument("--gt", required=True, help="ground-truth JSONL")
    p.add_argument("--group-by", choices=ev.GROUP_MODES, default="none")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="accuracy vs top-k and/or delta over a dump dataset")
    p.add_argument("--manifest", required=True, help="JSONL of {sample_id, dump, description?|tokens?}")
    p.add_argument("--gt", required=True, help="ground-truth JSONL")
    p.add_argument("--top-k-list", help="comma-separated top-k values")
    p.add_argument("--delta-list", help="comma-separated delta values")
    _add_grounding_flags(p)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ocg-build", help="build aspect-ratio-cropped grounding datasets from screenshots + OCR")
    p.add_argument("--screens", required=True, help="directory of screenshots with sibling <stem>.json OCR files")
    p.add_argument("--ratios", required=True, help="comma-separated width:height ratios, e.g. 1:4,4:3")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ocg_build)

    p = sub.add_parser("synth", help="generate synthetic dumps with planted ground truth")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, help="emit this many seeded fixtures plus gt.jsonl and manifest.jsonl")
    p.add_argument("--q-count", type=int, default=8)
    p.add_argument("--heads", type=int, default=20)
    p.add_argument("--tokens", type=int, default=4)
    p.add_argument("--grid", help="grid as COLSxROWS, e.g. 8x8")
    p.add_argument("--patch", type=int, default=14)
    p.add_argument("--hotspot", help="target cell as x,y (default: drawn from seed)")
    p.add_argument("--noise-heads", type=int, default=0)
    p.add_argument("--signal", type=float, default=0.9)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("parse-box", help="parse a <box>...</box> response and rescale to pixels")
    p.add_argument("--text", required=True)
    p.add_argument("--width", type=float, required=True)
    p.add_argument("--height", type=float, required=True)
    p.set_defaults(func=cmd_parse_box)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except AttnGroundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
