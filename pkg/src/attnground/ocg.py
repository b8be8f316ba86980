"""Optical-character-grounding dataset construction: crop screenshots to a
set of aspect ratios and keep only the OCR boxes fully contained in each crop."""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from .errors import AttnGroundError
from .evaluate import GroundTruthElement, write_ground_truth

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class MissingOcr(AttnGroundError):
    """A screenshot has no matching OCR annotation file."""


class DegenerateCrop(AttnGroundError):
    """The requested ratio floors to a zero-size crop for this image."""


class InvalidOcr(AttnGroundError):
    """An OCR annotation file violates the expected schema."""


@dataclass(frozen=True)
class OcrRecord:
    """One OCR hit: its text and bounding box on the source screenshot."""

    text: str
    bbox_px: tuple[float, float, float, float]

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bbox_px
        if not (xmin < xmax and ymin < ymax):
            raise InvalidOcr(f"degenerate OCR box {self.bbox_px} for text {self.text!r}")


@dataclass(frozen=True)
class CropSpec:
    """A target aspect ratio (width : height), anchored at the top-left."""

    ratio_w: int
    ratio_h: int
    anchor: str = "top_left"

    def __post_init__(self):
        if self.ratio_w < 1 or self.ratio_h < 1:
            raise ValueError(f"ratio components must be >= 1, got {self.ratio_w}:{self.ratio_h}")
        if self.anchor != "top_left":
            raise ValueError(f"unsupported anchor {self.anchor!r}")

    @property
    def tag(self) -> str:
        return f"{self.ratio_w}:{self.ratio_h}"


def parse_ratio(text: str) -> CropSpec:
    m = re.fullmatch(r"(\d+):(\d+)", text.strip())
    if not m:
        raise ValueError(f"ratio must look like '9:16', got {text!r}")
    return CropSpec(ratio_w=int(m.group(1)), ratio_h=int(m.group(2)))


def crop_dims(image_w: int, image_h: int, spec: CropSpec) -> tuple[int, int]:
    """Maximal sub-rectangle of the requested ratio that fits the image.

    Scale s = min(image_w / ratio_w, image_h / ratio_h); each crop dimension
    is floor(s * ratio), so the realized ratio is within one pixel per axis.
    """
    if image_w < 1 or image_h < 1:
        raise ValueError(f"image dims must be positive, got {image_w}x{image_h}")
    s = min(image_w / spec.ratio_w, image_h / spec.ratio_h)
    crop_w = math.floor(s * spec.ratio_w)
    crop_h = math.floor(s * spec.ratio_h)
    if crop_w < 1 or crop_h < 1:
        raise DegenerateCrop(
            f"ratio {spec.tag} floors to {crop_w}x{crop_h} on a {image_w}x{image_h} image"
        )
    return crop_w, crop_h


def filter_boxes(
    records: list[OcrRecord],
    crop: tuple[float, float, float, float],
) -> list[OcrRecord]:
    """Keep the records fully inside the crop (edges inclusive), translated
    into the crop's coordinate frame."""
    xmin, ymin, xmax, ymax = crop
    kept = []
    for rec in records:
        bx0, by0, bx1, by1 = rec.bbox_px
        if bx0 >= xmin and by0 >= ymin and bx1 <= xmax and by1 <= ymax:
            kept.append(
                OcrRecord(text=rec.text, bbox_px=(bx0 - xmin, by0 - ymin, bx1 - xmin, by1 - ymin))
            )
    return kept


def build_records(
    screen_id: str,
    image_w: int,
    image_h: int,
    ocr: list[OcrRecord],
    ratios: list[CropSpec],
) -> dict[str, list[GroundTruthElement]]:
    """Crop one screenshot at every ratio and emit the contained boxes as
    ground-truth elements in crop coordinates. Degenerate crops are skipped
    with a warning."""
    out: dict[str, list[GroundTruthElement]] = {}
    for spec in ratios:
        try:
            crop_w, crop_h = crop_dims(image_w, image_h, spec)
        except DegenerateCrop as exc:
            log.warning("skipping %s for %s: %s", spec.tag, screen_id, exc)
            continue
        kept = filter_boxes(ocr, (0.0, 0.0, float(crop_w), float(crop_h)))
        elements = [
            GroundTruthElement(
                sample_id=f"{screen_id}:{spec.tag}:{i:04d}",
                image_ref=f"{screen_id}@{spec.tag}",
                query_text=rec.text,
                bbox_px=rec.bbox_px,
                element_type="text",
                platform="web",
                aspect_ratio=spec.tag,
            )
            for i, rec in enumerate(kept)
        ]
        out[spec.tag] = elements
    return out


def read_ocr_file(path) -> list[OcrRecord]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidOcr(f"cannot parse OCR file {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise InvalidOcr(f"{path}: OCR file must hold a JSON list")
    records = []
    for i, entry in enumerate(raw):
        try:
            records.append(
                OcrRecord(text=entry["text"], bbox_px=tuple(float(v) for v in entry["bbox"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidOcr(f"{path}: record {i} is malformed: {exc}") from exc
    return records


def _ratio_filename(tag: str) -> str:
    return f"ocg_{tag.replace(':', 'x')}.jsonl"


def build_dataset(screens_dir, ratios: list[CropSpec], out_dir) -> dict:
    """Build one ground-truth JSONL per ratio from a directory of screenshots
    plus sibling ``<stem>.json`` OCR files. Returns the stats mapping also
    written to ``stats.json`` / ``stats.txt``."""
    screens_dir = Path(screens_dir)
    out_dir = Path(out_dir)
    images = sorted(p for p in screens_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not images:
        raise MissingOcr(f"no screenshots found under {screens_dir}")

    per_ratio: dict[str, list[GroundTruthElement]] = {spec.tag: [] for spec in ratios}
    for image_path in images:
        ocr_path = image_path.with_suffix(".json")
        if not ocr_path.is_file():
            raise MissingOcr(f"no OCR file for {image_path.name} (expected {ocr_path.name})")
        with Image.open(image_path) as img:
            image_w, image_h = img.size
        ocr = read_ocr_file(ocr_path)
        built = build_records(image_path.stem, image_w, image_h, ocr, ratios)
        for tag, elements in built.items():
            per_ratio[tag].extend(elements)

    out_dir.mkdir(parents=True, exist_ok=True)
    stats = {
        "screens": len(images),
        "ratios": {tag: len(elements) for tag, elements in per_ratio.items()},
        "total_records": sum(len(elements) for elements in per_ratio.values()),
    }
    for tag, elements in per_ratio.items():
        write_ground_truth(elements, out_dir / _ratio_filename(tag))
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "stats.txt").write_text(render_stats_table(stats) + "\n", encoding="utf-8")
    return stats


def render_stats_table(stats: dict) -> str:
    tags = list(stats["ratios"])
    width = max([len("ratio")] + [len(t) for t in tags])
    lines = [f"{'ratio':<{width}}  records"]
    for tag in tags:
        lines.append(f"{tag:<{width}}  {stats['ratios'][tag]:>7d}")
    lines.append(f"{'total':<{width}}  {stats['total_records']:>7d}")
    return "\n".join(lines)
