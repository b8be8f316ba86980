"""Datasets, the element-accuracy metric, grouped reports, and the baseline
box-string parser with [0, 1000] -> pixel rescaling."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AttnGroundError

ELEMENT_TYPES = ("text", "icon_widget")
PLATFORMS = ("mobile", "desktop", "web", "other")
GROUP_MODES = ("platform_type", "aspect_ratio", "none")

_BOX_RE = re.compile(r"<box>(.*?)</box>", re.DOTALL)


class DuplicatePrediction(AttnGroundError):
    """Two predictions carry the same sample_id."""


class NoBoxFound(AttnGroundError):
    """The response contains no <box>...</box> span; scored as incorrect."""


class MalformedBox(AttnGroundError):
    """A <box> span does not hold exactly four numbers."""


class InvalidRecord(AttnGroundError):
    """A JSONL record violates the ground-truth or prediction schema."""


@dataclass(frozen=True)
class GroundTruthElement:
    """One grounding target: a query string and its bounding box in pixels."""

    sample_id: str
    image_ref: str
    query_text: str
    bbox_px: tuple[float, float, float, float]
    element_type: str = "text"
    platform: str = "other"
    aspect_ratio: str = ""

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bbox_px
        if not (xmin < xmax and ymin < ymax):
            raise InvalidRecord(f"sample {self.sample_id!r} has degenerate bbox {self.bbox_px}")
        if not all(math.isfinite(v) for v in self.bbox_px):
            raise InvalidRecord(f"sample {self.sample_id!r} has non-finite bbox {self.bbox_px}")
        if self.element_type not in ELEMENT_TYPES:
            raise InvalidRecord(f"unknown element_type {self.element_type!r}")
        if self.platform not in PLATFORMS:
            raise InvalidRecord(f"unknown platform {self.platform!r}")


@dataclass(frozen=True)
class Prediction:
    """A predicted pixel point for one sample, with optional diagnostics."""

    sample_id: str
    point_px: tuple[float, float]
    meta: dict | None = None

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.point_px):
            raise InvalidRecord(f"prediction {self.sample_id!r} has non-finite point {self.point_px}")


@dataclass
class GroupStats:
    correct: int = 0
    total: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


@dataclass
class EvalReport:
    """Per-group and overall element accuracy. ``group_mean`` is the plain
    mean of group accuracies; ``overall`` pools all samples."""

    groups: dict[str, GroupStats] = field(default_factory=dict)
    overall: GroupStats = field(default_factory=GroupStats)

    @property
    def group_mean(self) -> float:
        if not self.groups:
            return 0.0
        return sum(g.accuracy for g in self.groups.values()) / len(self.groups)

    def to_dict(self) -> dict:
        return {
            "groups": {
                key: {"correct": g.correct, "total": g.total, "accuracy": g.accuracy}
                for key, g in self.groups.items()
            },
            "overall": {
                "correct": self.overall.correct,
                "total": self.overall.total,
                "accuracy": self.overall.accuracy,
            },
            "group_mean_accuracy": self.group_mean,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EvalReport":
        report = cls()
        for key, g in raw["groups"].items():
            report.groups[key] = GroupStats(correct=g["correct"], total=g["total"])
        report.overall = GroupStats(
            correct=raw["overall"]["correct"], total=raw["overall"]["total"]
        )
        return report

    def render_table(self) -> str:
        rows = [(key, g.correct, g.total, g.accuracy) for key, g in self.groups.items()]
        rows.append(("Average", self.overall.correct, self.overall.total, self.group_mean))
        key_width = max(len(r[0]) for r in rows)
        lines = [f"{'group':<{key_width}}  correct  total  accuracy"]
        for key, correct, total, acc in rows:
            lines.append(f"{key:<{key_width}}  {correct:>7d}  {total:>5d}  {100 * acc:>7.1f}%")
        return "\n".join(lines)


def point_in_bbox(point: tuple[float, float], bbox: tuple[float, float, float, float]) -> bool:
    """Inclusive containment test: edge hits count as inside."""
    x, y = point
    xmin, ymin, xmax, ymax = bbox
    return xmin <= x <= xmax and ymin <= y <= ymax


def _ratio_sort_key(key: str):
    m = re.fullmatch(r"(\d+):(\d+)", key)
    if m:
        return (0, int(m.group(1)) / int(m.group(2)), key)
    return (1, 0.0, key)


def _group_key(gt: GroundTruthElement, group_by: str) -> str:
    if group_by == "platform_type":
        return f"{gt.platform}/{gt.element_type}"
    if group_by == "aspect_ratio":
        return gt.aspect_ratio or "unknown"
    return "all"


def evaluate(
    preds: list[Prediction],
    gts: list[GroundTruthElement],
    group_by: str = "none",
) -> EvalReport:
    """Score predictions against ground truth. A sample is correct when its
    predicted point falls inside the target bbox; missing predictions count
    as incorrect. Predictions without a matching sample are ignored."""
    if group_by not in GROUP_MODES:
        raise ValueError(f"group_by must be one of {GROUP_MODES}, got {group_by!r}")
    by_id: dict[str, Prediction] = {}
    for p in preds:
        if p.sample_id in by_id:
            raise DuplicatePrediction(f"duplicate prediction for sample {p.sample_id!r}")
        by_id[p.sample_id] = p

    report = EvalReport()
    keyed: dict[str, GroupStats] = {}
    for gt in gts:
        key = _group_key(gt, group_by)
        stats = keyed.setdefault(key, GroupStats())
        stats.total += 1
        report.overall.total += 1
        pred = by_id.get(gt.sample_id)
        if pred is not None and point_in_bbox(pred.point_px, gt.bbox_px):
            stats.correct += 1
            report.overall.correct += 1

    if group_by == "platform_type":
        def order(key):
            platform, element = key.split("/", 1)
            return (PLATFORMS.index(platform), ELEMENT_TYPES.index(element))
        report.groups = dict(sorted(keyed.items(), key=lambda kv: order(kv[0])))
    elif group_by == "aspect_ratio":
        report.groups = dict(sorted(keyed.items(), key=lambda kv: _ratio_sort_key(kv[0])))
    else:
        report.groups = keyed
    return report


def parse_box(text: str, image_w: float, image_h: float) -> tuple[tuple[float, float, float, float], tuple[float, float]]:
    """Extract the first ``<box>xmin ymin xmax ymax</box>`` span and rescale
    its [0, 1000] coordinates to pixels. Returns (bbox, center)."""
    m = _BOX_RE.search(text)
    if m is None:
        raise NoBoxFound("no <box>...</box> span in response text")
    parts = m.group(1).split()
    if len(parts) != 4:
        raise MalformedBox(f"expected 4 coordinates, got {len(parts)}: {m.group(1)!r}")
    try:
        xmin, ymin, xmax, ymax = (float(p) for p in parts)
    except ValueError as exc:
        raise MalformedBox(f"non-numeric box coordinates: {m.group(1)!r}") from exc
    bbox = (
        xmin * image_w / 1000.0,
        ymin * image_h / 1000.0,
        xmax * image_w / 1000.0,
        ymax * image_h / 1000.0,
    )
    center = ((bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0)
    return bbox, center


def _gt_from_dict(raw: dict, lineno: int) -> GroundTruthElement:
    try:
        bbox = raw["bbox_px"]
        if not (isinstance(bbox, list) and len(bbox) == 4):
            raise InvalidRecord(f"line {lineno}: bbox_px must be a list of 4 numbers")
        return GroundTruthElement(
            sample_id=raw["sample_id"],
            image_ref=raw["image_ref"],
            query_text=raw["query_text"],
            bbox_px=tuple(float(v) for v in bbox),
            element_type=raw.get("element_type", "text"),
            platform=raw.get("platform", "other"),
            aspect_ratio=raw.get("aspect_ratio", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRecord(f"line {lineno}: bad ground-truth record: {exc}") from exc


def gt_to_dict(gt: GroundTruthElement) -> dict:
    return {
        "sample_id": gt.sample_id,
        "image_ref": gt.image_ref,
        "query_text": gt.query_text,
        "bbox_px": list(gt.bbox_px),
        "element_type": gt.element_type,
        "platform": gt.platform,
        "aspect_ratio": gt.aspect_ratio,
    }


def read_ground_truth(path) -> list[GroundTruthElement]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidRecord(f"line {lineno}: not valid JSON: {exc}") from exc
        records.append(_gt_from_dict(raw, lineno))
    return records


def write_ground_truth(records: list[GroundTruthElement], path) -> None:
    lines = [json.dumps(gt_to_dict(gt), sort_keys=True) for gt in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def pred_to_dict(pred: Prediction) -> dict:
    out = {"sample_id": pred.sample_id, "x": pred.point_px[0], "y": pred.point_px[1]}
    if pred.meta is not None:
        out["meta"] = pred.meta
    return out


def read_predictions(path) -> list[Prediction]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            records.append(
                Prediction(
                    sample_id=raw["sample_id"],
                    point_px=(float(raw["x"]), float(raw["y"])),
                    meta=raw.get("meta"),
                )
            )
        except json.JSONDecodeError as exc:
            raise InvalidRecord(f"line {lineno}: not valid JSON: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidRecord(f"line {lineno}: bad prediction record: {exc}") from exc
    return records


def write_predictions(preds: list[Prediction], path) -> None:
    lines = [json.dumps(pred_to_dict(p), sort_keys=True) for p in preds]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
