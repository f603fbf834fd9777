import numpy as np
import pytest
from hypothesis import given, strategies as st

from triportrait.errors import FormatError, ParameterError, StructuralError
from triportrait.images import (dequantize, quantize, read_image, read_image_u8, read_raster,
                                write_image, write_raster)


def test_quantize_rounds_half_to_even_and_clamps():
    q = quantize(np.array([-1.0, 0.0, 0.5 / 255, 1.5 / 255, 1.0, 7.0]))
    np.testing.assert_array_equal(q, [0, 0, 0, 2, 255, 255])


@given(st.integers(0, 2**32))
def test_quantize_dequantize_fixed_point(seed):
    q = np.random.default_rng(seed).integers(0, 256, size=(3, 4, 3), dtype=np.uint8)
    np.testing.assert_array_equal(quantize(dequantize(q)), q)


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_image_roundtrip(tmp_path, suffix):
    rgb = np.random.default_rng(1).random((5, 7, 3))
    path = tmp_path / f"a{suffix}"
    write_image(rgb, path)
    np.testing.assert_array_equal(read_image_u8(path), quantize(rgb))
    assert np.abs(read_image(path) - rgb).max() <= 0.5 / 255 + 1e-12


def test_png_bytes_deterministic(tmp_path):
    rgb = np.random.default_rng(2).random((6, 6, 3))
    write_image(rgb, tmp_path / "a.png")
    write_image(rgb, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_image_validation(tmp_path):
    with pytest.raises(StructuralError):
        write_image(np.zeros((4, 4)), tmp_path / "a.png")
    with pytest.raises(ParameterError):
        write_image(np.full((2, 2, 3), np.nan), tmp_path / "a.png")
    (tmp_path / "bad.png").write_bytes(b"\x89PNG garbage")
    with pytest.raises(FormatError):
        read_image(tmp_path / "bad.png")
    (tmp_path / "bad.ppm").write_bytes(b"P6\n4 4\n255\n" + b"\0" * 5)
    with pytest.raises(FormatError, match="at byte"):
        read_image(tmp_path / "bad.ppm")


def test_raster_roundtrip_with_nan(tmp_path):
    arr = np.arange(24, dtype=np.float64).reshape(2, 3, 4) / 7
    arr[1, 2, 3] = np.nan
    write_raster(arr, tmp_path / "r.imgf")
    back = read_raster(tmp_path / "r.imgf")
    assert back.dtype == np.float32 and back.shape == (2, 3, 4)
    assert back[1, 2, 3] == -1.0
    np.testing.assert_allclose(back.ravel()[:-1], arr.ravel()[:-1], rtol=1e-7)


def test_raster_errors(tmp_path):
    with pytest.raises(StructuralError):
        write_raster(np.zeros((1, 1, 1, 1, 1)), tmp_path / "x.imgf")
    write_raster(np.zeros((3, 3)), tmp_path / "r.imgf")
    data = (tmp_path / "r.imgf").read_bytes()
    for blob in (b"NOPE" + data[4:], data[:-2], data[:6]):
        (tmp_path / "b.imgf").write_bytes(blob)
        with pytest.raises(FormatError, match="at byte"):
            read_raster(tmp_path / "b.imgf")


def test_float32_raster_bit_identical(tmp_path):
    arr = np.random.default_rng(3).normal(size=(4, 5)).astype(np.float32)
    write_raster(arr, tmp_path / "r.imgf")
    assert np.array_equal(read_raster(tmp_path / "r.imgf"), arr)


def test_black_image_payload_is_zero(tmp_path):
    write_image(np.zeros((3, 4, 3)), tmp_path / "k.ppm")
    data = (tmp_path / "k.ppm").read_bytes()
    assert data.endswith(bytes(36)) and data.startswith(b"P6\n4 3\n255\n")
