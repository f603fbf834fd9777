"""Image and float-raster files.

RGB images are stored as 8-bit PNG (or binary PPM when the path ends in
``.ppm``), quantized linearly with round-half-even.  Float rasters of any
rank up to 4 use the ``IMGF`` container: magic, version, rank, dims (all
little-endian uint32) followed by row-major little-endian float32 values.
NaN entries are written as -1.0.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, ParameterError, StructuralError
from .fileio import atomic_write, check_magic

RASTER_MAGIC = b"IMGF"
RASTER_VERSION = 1
INVALID_DEPTH = -1.0


def quantize(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    return np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) / 255.0


def encode_png(rgb) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(quantize(rgb), mode="RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def encode_ppm(rgb) -> bytes:
    q = quantize(rgb)
    h, w, _ = q.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def write_image(rgb, path) -> None:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise StructuralError(f"RGB image must be (H, W, 3), got {rgb.shape}")
    if not np.all(np.isfinite(rgb)):
        raise ParameterError("RGB image contains non-finite values")
    path = Path(path)
    payload = encode_ppm(rgb) if path.suffix.lower() == ".ppm" else encode_png(rgb)
    try:
        atomic_write(path, payload)
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def _decode_ppm(data: bytes, path) -> np.ndarray:
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header", pos, str(path))
        tokens.append(data[start:pos])
    pos += 1
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError("malformed PPM header", pos, str(path)) from exc
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}", pos, str(path))
    need = w * h * 3
    if len(data) - pos < need:
        raise FormatError("truncated PPM payload", len(data), str(path))
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(h, w, 3)


def read_image_u8(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if data[:2] == b"P6":
        return _decode_ppm(data, path)
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"))
    except Exception as exc:  # Pillow raises several unrelated types
        raise FormatError(f"cannot decode image: {exc}", 0, str(path)) from exc


def read_image(path) -> np.ndarray:
    """RGB image as float64 in [0, 1], shape ``(H, W, 3)``."""
    return dequantize(read_image_u8(path))


def write_raster(arr, path) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    if not 1 <= arr.ndim <= 4:
        raise StructuralError(f"raster rank must be 1..4, got {arr.ndim}")
    arr = np.where(np.isnan(arr), INVALID_DEPTH, arr)
    header = RASTER_MAGIC + struct.pack("<II", RASTER_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    atomic_write(path, header + np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_raster(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    check_magic(data, RASTER_MAGIC, path)
    if len(data) < 12:
        raise FormatError("truncated header", len(data), str(path))
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != RASTER_VERSION:
        raise FormatError(f"unsupported version {version}", 4, str(path))
    if not 1 <= ndim <= 4:
        raise FormatError(f"invalid rank {ndim}", 8, str(path))
    off = 12 + 4 * ndim
    if len(data) < off:
        raise FormatError("truncated dimension table", len(data), str(path))
    shape = struct.unpack_from(f"<{ndim}I", data, 12)
    count = int(np.prod(shape))
    if len(data) - off != 4 * count:
        raise FormatError(
            f"payload is {len(data) - off} bytes, expected {4 * count}",
            off + min(len(data) - off, 4 * count), str(path),
        )
    return np.frombuffer(data, dtype="<f4", offset=off).reshape(shape).astype(np.float32)
