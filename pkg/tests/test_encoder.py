import numpy as np
import pytest

from regionrec.encoder import (
    EncoderParams,
    FeatureGrid,
    encode,
    load_encoder_params,
    save_encoder_params,
)
from regionrec.maskio import RasterImage


def test_zero_image_gives_zero_grid():
    params = EncoderParams.seeded(1, patch_side=4, dim=8)
    img = RasterImage.from_array(np.zeros((16, 16)))
    grid = encode(img, params)
    assert grid.rows == grid.cols == 4
    assert np.array_equal(grid.values, np.zeros((4, 4, 8)))


def test_encode_is_deterministic(rng):
    params = EncoderParams.seeded(5, patch_side=4, dim=8)
    img = RasterImage.from_array(rng.integers(0, 256, (16, 16)).astype(float))
    a = encode(img, params)
    b = encode(img, params)
    assert np.array_equal(a.values, b.values)


def test_single_patch_hand_oracle():
    # patch_side=2, dim=3, known projection: one 12-step dot product by hand
    proj = np.arange(12, dtype=float).reshape(4, 3) / 10.0
    params = EncoderParams(patch_side=2, dim=3, channels=1, projection=proj)
    pixels = np.array([[51.0, 102.0], [153.0, 204.0]])
    img = RasterImage.from_array(pixels)
    grid = encode(img, params)
    v = pixels.reshape(-1) / 255.0  # [0.2, 0.4, 0.6, 0.8]
    expected = [sum(v[i] * proj[i, d] for i in range(4)) for d in range(3)]
    assert grid.values[0, 0] == pytest.approx(expected, abs=1e-12)


def test_linearity_in_intensity(rng):
    params = EncoderParams.seeded(2, patch_side=4, dim=6)
    base = rng.integers(0, 64, (16, 16)).astype(float)
    a = encode(RasterImage.from_array(base), params).values
    b = encode(RasterImage.from_array(base * 3.0), params).values
    assert np.allclose(b, 3.0 * a, rtol=1e-6, atol=1e-12)


def test_shared_weight_alignment(rng):
    # identical pixel content encodes identically regardless of how it arrived
    params = EncoderParams.seeded(3, patch_side=4, dim=8)
    content = rng.integers(0, 256, (16, 16)).astype(float)
    as_global = RasterImage.from_array(content)
    as_crop = RasterImage.from_array(content.copy())
    assert np.array_equal(encode(as_global, params).values, encode(as_crop, params).values)


def test_seed_changes_weights():
    a = EncoderParams.seeded(1, patch_side=4, dim=4)
    b = EncoderParams.seeded(2, patch_side=4, dim=4)
    assert not np.array_equal(a.projection, b.projection)
    again = EncoderParams.seeded(1, patch_side=4, dim=4)
    assert np.array_equal(a.projection, again.projection)


def test_fan_in_scaled_init_range():
    params = EncoderParams.seeded(4, patch_side=28, dim=16)
    a = 1.0 / np.sqrt(28 * 28)
    assert np.abs(params.projection).max() <= a


def test_indivisible_side_is_shape_error():
    params = EncoderParams.seeded(1, patch_side=5, dim=4)
    with pytest.raises(ValueError, match="shape"):
        encode(RasterImage.from_array(np.zeros((16, 16))), params)


def test_nonsquare_rejected():
    params = EncoderParams.seeded(1, patch_side=4, dim=4)
    with pytest.raises(ValueError, match="square"):
        encode(RasterImage.from_array(np.zeros((16, 8))), params)


def test_feature_grid_rejects_nonfinite():
    with pytest.raises(ValueError, match="finite"):
        FeatureGrid(rows=1, cols=1, dim=2, values=np.array([[[np.nan, 0.0]]]))


def test_params_file_round_trip(tmp_path):
    params = EncoderParams.seeded(9, patch_side=4, dim=8)
    path = tmp_path / "enc.bin"
    save_encoder_params(params, path)
    back = load_encoder_params(path)
    assert back.patch_side == 4 and back.dim == 8 and back.channels == 1
    assert np.array_equal(back.projection, params.projection)  # f32-quantized at init
    assert path.read_bytes()[:4] == b"ENC0"


def test_params_file_bad_magic(tmp_path):
    path = tmp_path / "enc.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 12)
    with pytest.raises(ValueError, match="magic"):
        load_encoder_params(path)
