import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnground.evaluate import (
    DuplicatePrediction,
    EvalReport,
    GroundTruthElement,
    InvalidRecord,
    MalformedBox,
    NoBoxFound,
    Prediction,
    evaluate,
    parse_box,
    point_in_bbox,
    read_ground_truth,
    read_predictions,
    write_ground_truth,
    write_predictions,
)

OCG_RATIOS = ["1:4", "9:21", "9:19", "1:2", "9:16", "4:3", "16:9", "2:1", "21:9", "4:1"]


def gt(sample_id, bbox=(0.0, 0.0, 10.0, 10.0), **kw):
    defaults = dict(image_ref="img", query_text="q", element_type="text", platform="other", aspect_ratio="1:1")
    defaults.update(kw)
    return GroundTruthElement(sample_id=sample_id, bbox_px=bbox, **defaults)


def test_point_in_bbox():
    assert point_in_bbox((5, 5), (0, 0, 10, 10))
    assert point_in_bbox((10, 10), (0, 0, 10, 10))  # inclusive edges
    assert point_in_bbox((0, 0), (0, 0, 10, 10))
    assert not point_in_bbox((10.5, 5), (0, 0, 10, 10))
    assert not point_in_bbox((5, -0.1), (0, 0, 10, 10))


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_point_in_bbox_translation_invariant(dx, dy):
    assert point_in_bbox((5 + dx, 5 + dy), (0 + dx, 0 + dy, 10 + dx, 10 + dy))
    assert not point_in_bbox((11 + dx, 5 + dy), (0 + dx, 0 + dy, 10 + dx, 10 + dy))


def test_evaluate_all_correct():
    gts = [gt("a"), gt("b")]
    preds = [Prediction("a", (1, 1)), Prediction("b", (2, 2))]
    report = evaluate(preds, gts)
    assert report.overall.accuracy == 1.0


def test_evaluate_missing_counts_as_incorrect():
    gts = [gt(s) for s in "abcd"]
    preds = [Prediction(s, (1, 1)) for s in "abc"]
    report = evaluate(preds, gts)
    assert report.overall.correct == 3
    assert report.overall.total == 4
    assert report.overall.accuracy == 0.75


def test_evaluate_duplicate_prediction():
    with pytest.raises(DuplicatePrediction):
        evaluate([Prediction("a", (1, 1)), Prediction("a", (2, 2))], [gt("a")])


def test_evaluate_extra_predictions_ignored():
    report = evaluate([Prediction("ghost", (1, 1)), Prediction("a", (1, 1))], [gt("a")])
    assert report.overall.total == 1
    assert report.overall.correct == 1


def test_evaluate_groups_by_aspect_ratio():
    gts = [gt(f"s{i}-{r}", aspect_ratio=r) for r in OCG_RATIOS for i in range(2)]
    preds = [Prediction(g.sample_id, (1, 1)) for g in gts if not g.sample_id.startswith("s1")]
    report = evaluate(preds, gts, group_by="aspect_ratio")
    assert list(report.groups) == OCG_RATIOS  # sorted by numeric width:height ratio
    assert all(g.total == 2 and g.correct == 1 for g in report.groups.values())
    assert report.group_mean == pytest.approx(0.5)
    table = report.render_table()
    assert table.count("\n") == 11  # header + 10 ratios + Average
    assert "Average" in table


def test_evaluate_groups_by_platform_type():
    gts = [
        gt("a", platform="mobile", element_type="text"),
        gt("b", platform="mobile", element_type="icon_widget"),
        gt("c", platform="desktop", element_type="text"),
    ]
    report = evaluate([], gts, group_by="platform_type")
    assert list(report.groups) == ["mobile/text", "mobile/icon_widget", "desktop/text"]
    assert report.overall.total == 3
    assert report.overall.accuracy == 0.0


def test_evaluate_order_independent():
    gts = [gt(f"s{i}", bbox=(0, 0, 10 + i, 10 + i), aspect_ratio=OCG_RATIOS[i % 10]) for i in range(20)]
    preds = [Prediction(f"s{i}", (float(i), float(i))) for i in range(0, 20, 2)]
    base = evaluate(preds, gts, group_by="aspect_ratio").to_dict()
    rnd = random.Random(3)
    for _ in range(5):
        p2, g2 = preds[:], gts[:]
        rnd.shuffle(p2)
        rnd.shuffle(g2)
        assert evaluate(p2, g2, group_by="aspect_ratio").to_dict() == base


def test_group_totals_partition_overall():
    gts = [gt(f"s{i}", platform="web", element_type="text", aspect_ratio=OCG_RATIOS[i % 3]) for i in range(9)]
    report = evaluate([], gts, group_by="aspect_ratio")
    assert sum(g.total for g in report.groups.values()) == report.overall.total


def test_report_json_round_trip(tmp_path):
    gts = [gt("a"), gt("b", aspect_ratio="4:3")]
    report = evaluate([Prediction("a", (1, 1))], gts, group_by="aspect_ratio")
    blob = json.dumps(report.to_dict())
    back = EvalReport.from_dict(json.loads(blob))
    assert back.to_dict() == report.to_dict()


def test_parse_box_unit_scale():
    bbox, center = parse_box("<box>100 200 300 400</box>", 1000, 1000)
    assert bbox == (100, 200, 300, 400)
    assert center == (200, 300)


def test_parse_box_rescales():
    bbox, center = parse_box("<box>100 200 300 400</box>", 500, 2000)
    assert bbox == (50, 400, 150, 800)
    assert center == (100, 600)


def test_parse_box_first_occurrence():
    bbox, _ = parse_box("a <box>0 0 10 10</box> b <box>1 1 2 2</box>", 1000, 1000)
    assert bbox == (0, 0, 10, 10)


def test_parse_box_errors():
    with pytest.raises(NoBoxFound):
        parse_box("no box here", 100, 100)
    with pytest.raises(MalformedBox):
        parse_box("<box>1 2 3</box>", 100, 100)
    with pytest.raises(MalformedBox):
        parse_box("<box>1 2 three 4</box>", 100, 100)


@given(
    st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000),
    st.integers(1, 4000), st.integers(1, 4000),
)
def test_parse_box_scale_linearity(a, b, c, d, w, h):
    text = f"<box>{a} {b} {c} {d}</box>"
    small, _ = parse_box(text, w, h)
    big, _ = parse_box(text, 2 * w, 2 * h)
    assert big == tuple(2 * v for v in small)


def test_gt_jsonl_round_trip(tmp_path):
    gts = [gt("a", platform="web", aspect_ratio="4:3"), gt("b", bbox=(1.5, 2.5, 9.0, 12.0))]
    path = tmp_path / "gt.jsonl"
    write_ground_truth(gts, path)
    assert read_ground_truth(path) == gts


def test_pred_jsonl_round_trip(tmp_path):
    preds = [Prediction("a", (1.25, 2.5), meta={"num_regions": 2}), Prediction("b", (0.0, 0.0))]
    path = tmp_path / "p.jsonl"
    write_predictions(preds, path)
    assert read_predictions(path) == preds


def test_jsonl_schema_violations(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"sample_id": "a"}\n')
    with pytest.raises(InvalidRecord):
        read_predictions(path)
    path.write_text("not json\n")
    with pytest.raises(InvalidRecord):
        read_ground_truth(path)
    path.write_text(json.dumps({
        "sample_id": "a", "image_ref": "i", "query_text": "q",
        "bbox_px": [10, 0, 0, 10], "element_type": "text", "platform": "web",
    }) + "\n")
    with pytest.raises(InvalidRecord):
        read_ground_truth(path)
