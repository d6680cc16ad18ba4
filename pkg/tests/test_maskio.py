import json

import numpy as np
import pytest

from regionrec.maskio import (
    BinaryMask,
    MaskRecord,
    RasterImage,
    area_ratio_filter,
    mask_from_image,
    mask_from_rle,
    mask_to_image,
    mask_to_rle,
    read_pgm,
    read_records,
    write_pgm,
    write_records,
)

from conftest import random_mask


def test_read_p5_direct_byte_copy(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = read_pgm(path)
    assert (img.width, img.height, img.channels) == (2, 2, 1)
    assert img.plane().ravel().tolist() == [0, 255, 128, 64]


def test_read_p2_single_pixel(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2 1 1 255 200")
    img = read_pgm(path)
    assert (img.width, img.height) == (1, 1)
    assert img.plane()[0, 0] == 200


def test_truncated_p5_is_length_error(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128]))
    with pytest.raises(ValueError, match="length"):
        read_pgm(path)


def test_bad_magic_names_field(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P6\n1 1\n255\n\x00")
    with pytest.raises(ValueError, match="magic"):
        read_pgm(path)


def test_maxval_above_255_rejected(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2 1 1 65535 1234")
    with pytest.raises(ValueError, match="maxval"):
        read_pgm(path)


def test_pgm_comments_are_skipped(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2 # comment\n2 1 # size\n255\n7 9")
    img = read_pgm(path)
    assert img.plane().ravel().tolist() == [7, 9]


@pytest.mark.parametrize("binary", [True, False])
def test_pgm_round_trip(tmp_path, rng, binary):
    arr = rng.integers(0, 256, size=(5, 7)).astype(np.float64)
    img = RasterImage.from_array(arr)
    path = tmp_path / "img.pgm"
    write_pgm(img, path, binary=binary)
    back = read_pgm(path)
    assert np.array_equal(back.data, img.data)


def test_rle_single_run_all_true():
    mask = mask_from_rle('{"size":[2,2],"counts":[0,4]}')
    assert mask.bits.all() and (mask.height, mask.width) == (2, 2)


def test_rle_hand_expanded_column_major():
    # counts [1,2,1]: column-major order false,true,true,false
    mask = mask_from_rle('{"size":[2,2],"counts":[1,2,1]}')
    # column 0 = [F, T], column 1 = [T, F]
    assert mask.bits[0, 0] == False  # noqa: E712
    assert mask.bits[1, 0] == True  # noqa: E712
    assert mask.bits[0, 1] == True  # noqa: E712
    assert mask.bits[1, 1] == False  # noqa: E712


def test_rle_count_sum_mismatch():
    with pytest.raises(ValueError, match="length"):
        mask_from_rle('{"size":[1,2],"counts":[3]}')


def test_rle_negative_count():
    with pytest.raises(ValueError, match="negative"):
        mask_from_rle('{"size":[1,2],"counts":[-1,3]}')


def test_rle_round_trip_fuzz(rng):
    for _ in range(200):
        m = random_mask(rng, int(rng.integers(1, 12)), int(rng.integers(1, 12)), p=rng.random())
        assert mask_from_rle(mask_to_rle(m)) == m


def test_mask_image_round_trip(rng):
    m = random_mask(rng, 9, 6)
    assert mask_from_image(mask_to_image(m)) == m


def test_empty_mask_rejected():
    with pytest.raises(ValueError, match="true bits"):
        BinaryMask.from_array(np.zeros((3, 3), dtype=bool))


def _record(n_true: int, image_id: str = "img", label: str | None = "cat") -> MaskRecord:
    bits = np.zeros(100, dtype=bool)
    bits[:n_true] = True
    return MaskRecord(mask=BinaryMask.from_array(bits.reshape(10, 10)), image_id=image_id, label=label)


def test_area_filter_boundary_kept_by_geq():
    kept, dropped = area_ratio_filter([_record(100)], {"img": 10000}, 0.01)
    assert len(kept) == 1 and not dropped


def test_area_filter_strict_inequality_drops():
    kept, dropped = area_ratio_filter([_record(99)], {"img": 10000}, 0.01)
    assert not kept and len(dropped) == 1


def test_area_filter_zero_ratio_keeps_everything(rng):
    records = [_record(int(rng.integers(1, 100))) for _ in range(20)]
    kept, dropped = area_ratio_filter(records, {"img": 10**6}, 0.0)
    assert kept == records and not dropped


def test_area_filter_partitions_and_preserves_order(rng):
    records = [_record(int(rng.integers(1, 100)), image_id=f"i{j}") for j in range(30)]
    areas = {f"i{j}": 500 for j in range(30)}
    kept, dropped = area_ratio_filter(records, areas, 0.1)
    assert len(kept) + len(dropped) == len(records)
    assert [r for r in records if r in kept or r in dropped] == records
    # order preserved within each part
    assert kept == [r for r in records if r.mask.area() / 500 >= 0.1]
    assert dropped == [r for r in records if r.mask.area() / 500 < 0.1]


def test_area_filter_missing_id_is_key_error():
    with pytest.raises(KeyError, match="missing"):
        area_ratio_filter([_record(5, image_id="missing")], {"img": 100}, 0.5)


def test_records_jsonl_round_trip(tmp_path, rng):
    records = [
        MaskRecord(mask=random_mask(rng, 6, 4), image_id=f"im{j}", label=None if j % 2 else f"c{j}")
        for j in range(8)
    ]
    path = tmp_path / "records.jsonl"
    write_records(records, path)
    back = read_records(path)
    assert back == records
    # one json object per line
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 8
    assert all(set(json.loads(ln)) == {"image_id", "label", "rle"} for ln in lines)


def test_records_error_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"image_id":"a","label":null,"rle":{"size":[1,2],"counts":[3]}}\n')
    with pytest.raises(ValueError, match="line 1"):
        read_records(path)
