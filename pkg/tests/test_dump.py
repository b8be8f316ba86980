import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnground.dump import (
    AttentionDump,
    CrossAttention,
    InvariantViolation,
    MalformedHeader,
    MissingFile,
    PatchGrid,
    SelfAttentionSlice,
    ShapeMismatch,
    TokenRecord,
    read_dump,
    write_dump,
)
from attnground.synth import random_dump

from conftest import tiny_dump


def test_shape_round_trip(tmp_path):
    # Q=2, N=2, T=1, 2x2 grid: 2*4 cross + 2*1*2 self f32 values
    dump = tiny_dump(q=2, heads=2, tokens=1, rows=2, cols=2)
    write_dump(dump, tmp_path / "d")
    back = read_dump(tmp_path / "d")
    assert back.cross.values.shape == (2, 4)
    assert back.self_slices.values.shape == (2, 1, 2)
    assert (tmp_path / "d" / "tensors.bin").stat().st_size == (2 * 4 + 2 * 1 * 2) * 4


def test_round_trip_equality(tmp_path, rng):
    dump = random_dump(rng)
    write_dump(dump, tmp_path / "d")
    assert read_dump(tmp_path / "d") == dump


def test_rewrite_is_byte_identical(tmp_path, rng):
    for _ in range(10):
        dump = random_dump(rng)
        write_dump(dump, tmp_path / "a")
        write_dump(read_dump(tmp_path / "a"), tmp_path / "b")
        assert (tmp_path / "a" / "tensors.bin").read_bytes() == (tmp_path / "b" / "tensors.bin").read_bytes()
        assert (tmp_path / "a" / "header.json").read_bytes() == (tmp_path / "b" / "header.json").read_bytes()


def test_payload_is_little_endian_f32(tmp_path):
    dump = tiny_dump()
    write_dump(dump, tmp_path / "d")
    payload = (tmp_path / "d" / "tensors.bin").read_bytes()
    expected = dump.cross.values.astype("<f4").tobytes() + dump.self_slices.values.astype("<f4").tobytes()
    assert payload == expected


def test_cross_row_sum_violation():
    grid = PatchGrid(rows_h=2, cols_w=2, image_w_px=28, image_h_px=28)
    with pytest.raises(InvariantViolation, match="row 0 sums"):
        CrossAttention(grid=grid, values=np.array([[0.6, 0.6, 0.0, 0.0]]))


def test_entry_range_violation():
    grid = PatchGrid(rows_h=1, cols_w=2, image_w_px=28, image_h_px=14)
    with pytest.raises(InvariantViolation, match="outside"):
        CrossAttention(grid=grid, values=np.array([[1.5, -0.5]]))


def test_nan_rejected():
    grid = PatchGrid(rows_h=1, cols_w=2, image_w_px=28, image_h_px=14)
    with pytest.raises(InvariantViolation):
        CrossAttention(grid=grid, values=np.array([[np.nan, 1.0]]))


def test_epsilon_entries_clamped():
    grid = PatchGrid(rows_h=1, cols_w=2, image_w_px=28, image_h_px=14)
    ca = CrossAttention(grid=grid, values=np.array([[1.0 + 5e-7, -5e-7]]))
    assert float(ca.values.min()) == 0.0
    assert float(ca.values.max()) == 1.0


def test_self_slice_sum_violation():
    with pytest.raises(InvariantViolation, match=r"self\[0, 0\]"):
        SelfAttentionSlice(values=np.array([[[0.7, 0.7]]]))


def test_grid_coverage_invariant():
    with pytest.raises(InvariantViolation):
        PatchGrid(rows_h=2, cols_w=2, image_w_px=28, image_h_px=14)  # one row would do
    with pytest.raises(InvariantViolation):
        PatchGrid(rows_h=2, cols_w=2, image_w_px=28, image_h_px=29)  # not covered
    # partial last row/col is fine
    PatchGrid(rows_h=2, cols_w=2, image_w_px=15, image_h_px=28)


def test_token_record_invariants():
    with pytest.raises(InvariantViolation):
        TokenRecord(index=0, text="", char_start=3, char_end=3)
    dump = tiny_dump(tokens=2)
    bad = (dump.tokens[0], TokenRecord(index=1, text="xy ", char_start=1, char_end=4))
    with pytest.raises(InvariantViolation, match="overlap"):
        AttentionDump(cross=dump.cross, self_slices=dump.self_slices, tokens=bad)


def test_token_count_mismatch():
    dump = tiny_dump(tokens=2)
    with pytest.raises(InvariantViolation):
        AttentionDump(cross=dump.cross, self_slices=dump.self_slices, tokens=dump.tokens[:1])


def test_flattening_convention():
    # one-hot placement: cell (x, y) maps to column y*W + x
    grid = PatchGrid(rows_h=3, cols_w=4, image_w_px=56, image_h_px=42)
    x, y = 2, 1
    row = np.zeros(grid.cell_count)
    row[grid.flat_index(x, y)] = 1.0
    ca = CrossAttention(grid=grid, values=row[None, :])
    reshaped = ca.values.reshape(grid.rows_h, grid.cols_w)
    assert reshaped[y, x] == 1.0
    assert reshaped.sum() == 1.0


def test_missing_files(tmp_path):
    with pytest.raises(MissingFile):
        read_dump(tmp_path / "nope")
    d = tmp_path / "d"
    write_dump(tiny_dump(), d)
    (d / "tensors.bin").unlink()
    with pytest.raises(MissingFile):
        read_dump(d)


def _written(tmp_path):
    d = tmp_path / "d"
    write_dump(tiny_dump(), d)
    header = json.loads((d / "header.json").read_text())
    return d, header


def _rewrite(d, header):
    (d / "header.json").write_text(json.dumps(header))


def test_header_not_json(tmp_path):
    d, _ = _written(tmp_path)
    (d / "header.json").write_text("{not json")
    with pytest.raises(MalformedHeader):
        read_dump(d)


def test_header_missing_key(tmp_path):
    d, header = _written(tmp_path)
    del header["q_count"]
    _rewrite(d, header)
    with pytest.raises(MalformedHeader, match="q_count"):
        read_dump(d)


def test_header_bad_version(tmp_path):
    d, header = _written(tmp_path)
    header["version"] = 99
    _rewrite(d, header)
    with pytest.raises(MalformedHeader, match="version"):
        read_dump(d)


def test_header_bad_dtype(tmp_path):
    d, header = _written(tmp_path)
    header["tensors"][0]["dtype"] = "f64le"
    _rewrite(d, header)
    with pytest.raises(MalformedHeader, match="f32le"):
        read_dump(d)


def test_header_unknown_tensor(tmp_path):
    d, header = _written(tmp_path)
    header["tensors"][0]["name"] = "mystery"
    _rewrite(d, header)
    with pytest.raises(MalformedHeader, match="mystery"):
        read_dump(d)


def test_header_token_count_mismatch(tmp_path):
    # header-internal inconsistency: declared count vs listed records
    d, header = _written(tmp_path)
    header["token_count"] = 5
    _rewrite(d, header)
    with pytest.raises(MalformedHeader):
        read_dump(d)


def test_declared_length_mismatch(tmp_path):
    d, header = _written(tmp_path)
    header["tensors"][0]["length_bytes"] += 4
    _rewrite(d, header)
    with pytest.raises(ShapeMismatch):
        read_dump(d)


def test_truncated_payload(tmp_path):
    d, _ = _written(tmp_path)
    payload = (d / "tensors.bin").read_bytes()
    (d / "tensors.bin").write_bytes(payload[:-4])
    with pytest.raises(ShapeMismatch):
        read_dump(d)


def test_trailing_garbage_payload(tmp_path):
    d, _ = _written(tmp_path)
    payload = (d / "tensors.bin").read_bytes()
    (d / "tensors.bin").write_bytes(payload + b"\x00\x00\x00\x00")
    with pytest.raises(ShapeMismatch):
        read_dump(d)


def _perturb_cross_entry(tmp_path, delta):
    d = tmp_path / "d"
    write_dump(tiny_dump(), d)
    payload = bytearray((d / "tensors.bin").read_bytes())
    arr = np.frombuffer(bytes(payload), dtype="<f4").copy()
    arr[0] += delta
    (d / "tensors.bin").write_bytes(arr.astype("<f4").tobytes())
    return d


@pytest.mark.parametrize("delta", [0.01, -0.01, 1.2, -0.3])
def test_perturbed_tensor_rejected(tmp_path, delta):
    d = _perturb_cross_entry(tmp_path, delta)
    with pytest.raises(InvariantViolation):
        read_dump(d)


def test_m_total_and_source_round_trip(tmp_path, rng):
    base = random_dump(rng)
    dump = AttentionDump(
        cross=base.cross,
        self_slices=base.self_slices,
        tokens=base.tokens,
        m_total=123,
        source="unit-test",
    )
    write_dump(dump, tmp_path / "d")
    back = read_dump(tmp_path / "d")
    assert back.m_total == 123
    assert back.source == "unit-test"
    assert back == dump


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_round_trip_random(tmp_path_factory, seed):
    dump = random_dump(np.random.default_rng(seed))
    path = tmp_path_factory.mktemp("dumps") / "d"
    write_dump(dump, path)
    assert read_dump(path) == dump
