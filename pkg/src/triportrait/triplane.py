"""Triplane representation: sampling, MLP decoding, procedural generation, I/O.

Planes are stored as a single ``(3, C, R, R)`` float32 array in the order
xy, xz, yz.  Each plane is indexed ``[channel, row, col]``; the first axis of
the plane name maps to columns and the second to rows, so the xy-plane is
sampled at ``(col=x, row=y)``.

World coordinates in ``[-0.5, 0.5]`` map to continuous pixel positions with
the align-corners convention ``u = (c + 0.5) * (R - 1)``; positions outside
the plane clamp to the border texel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, StructuralError
from .fileio import atomic_write, check_magic

PLANE_NAMES = ("xy", "xz", "yz")
# (column axis, row axis) of each plane in world xyz.
PLANE_AXES = ((0, 1), (0, 2), (1, 2))

TRIPLANE_MAGIC = b"TRPL"
MLP_MAGIC = b"MLPW"
FORMAT_VERSION = 1

DEFAULT_CHANNELS = 32
DEFAULT_RESOLUTION = 256
DEFAULT_HIDDEN = 16
DEFAULT_EXTRA_FEATURES = 29
LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class Triplane:
    planes: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.planes)
        if p.ndim != 4 or p.shape[0] != 3 or p.shape[2] != p.shape[3]:
            raise StructuralError(
                f"triplane must have shape (3, C, R, R), got {p.shape}"
            )
        if p.shape[2] < 2:
            raise StructuralError("triplane resolution must be at least 2")
        object.__setattr__(self, "planes", np.array(p, dtype=np.float32, order="C"))
        if not np.all(np.isfinite(self.planes)):
            raise StructuralError("triplane contains non-finite values")
        self.planes.setflags(write=False)

    @classmethod
    def from_planes(cls, xy, xz, yz) -> Triplane:
        shapes = {np.shape(xy), np.shape(xz), np.shape(yz)}
        if len(shapes) != 1:
            raise StructuralError(f"plane shapes differ: {sorted(shapes)}")
        return cls(np.stack([xy, xz, yz]).astype(np.float32))

    @property
    def channels(self) -> int:
        return self.planes.shape[1]

    @property
    def resolution(self) -> int:
        return self.planes.shape[2]

    def __eq__(self, other):
        if not isinstance(other, Triplane):
            return NotImplemented
        return self.planes.shape == other.planes.shape and np.array_equal(
            self.planes, other.planes
        )

    __hash__ = None


def world_to_pixel(coord, resolution: int) -> np.ndarray:
    """Map world coordinates to continuous align-corners pixel positions."""
    u = (np.asarray(coord, dtype=np.float64) + 0.5) * (resolution - 1)
    return np.clip(u, 0.0, resolution - 1)


def bilinear_lookup(plane: np.ndarray, col: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Bilinearly interpolate ``plane[..., row, col]`` at clamped positions.

    ``plane`` has shape ``(C, H, W)``; ``col``/``row`` are same-shaped arrays
    of pixel positions.  Returns ``(*col.shape, C)`` in float64.
    """
    _, h, w = plane.shape
    col = np.clip(col, 0.0, w - 1)
    row = np.clip(row, 0.0, h - 1)
    c0 = np.minimum(np.floor(col).astype(np.intp), w - 2)
    r0 = np.minimum(np.floor(row).astype(np.intp), h - 2)
    fc = (col - c0)[..., None]
    fr = (row - r0)[..., None]
    src = np.moveaxis(plane, 0, -1).astype(np.float64, copy=False)
    v00 = src[r0, c0]
    v01 = src[r0, c0 + 1]
    v10 = src[r0 + 1, c0]
    v11 = src[r0 + 1, c0 + 1]
    top = v00 * (1.0 - fc) + v01 * fc
    bottom = v10 * (1.0 - fc) + v11 * fc
    return top * (1.0 - fr) + bottom * fr


def sample_points(tp: Triplane, points) -> np.ndarray:
    """Mean bilinear triplane feature at each point; ``(..., 3) -> (..., C)``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[-1] != 3:
        raise StructuralError(f"points must have a trailing axis of 3, got {pts.shape}")
    r = tp.resolution
    total = 0.0
    for k, (ca, ra) in enumerate(PLANE_AXES):
        col = world_to_pixel(pts[..., ca], r)
        row = world_to_pixel(pts[..., ra], r)
        total = total + bilinear_lookup(tp.planes[k], col, row)
    return total / 3.0


def sample_triplane(tp: Triplane, x) -> np.ndarray:
    """Mean feature vector (length C) of the triplane at a single point."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (3,):
        raise StructuralError(f"sample point must have shape (3,), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("sample point must be finite")
    return sample_points(tp, x)


def procedural_triplane(seed: int, channels: int = DEFAULT_CHANNELS,
                        resolution: int = DEFAULT_RESOLUTION,
                        n_waves: int = 4) -> Triplane:
    """Smooth seeded triplane built from sums of plane waves.

    Each channel of each plane is a convex combination of ``n_waves``
    sinusoids, so every value lies in ``[-1, 1]``.
    """
    if channels < 4:
        raise ParameterError(f"channels must be >= 4, got {channels}")
    if resolution < 8:
        raise ParameterError(f"resolution must be >= 8, got {resolution}")
    rng = np.random.default_rng(np.uint64(seed))
    shape = (3, channels, n_waves)
    freq = rng.uniform(1.0, 6.0, size=shape) * 2.0 * np.pi
    angle = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    amp = rng.uniform(0.2, 1.0, size=shape)
    amp /= amp.sum(axis=-1, keepdims=True)

    coords = np.linspace(-0.5, 0.5, resolution)
    cc, rr = np.meshgrid(coords, coords)  # [row, col]
    planes = np.empty((3, channels, resolution, resolution), dtype=np.float32)
    for p in range(3):
        for c in range(channels):
            acc = np.zeros((resolution, resolution))
            for k in range(n_waves):
                kx = freq[p, c, k] * np.cos(angle[p, c, k])
                ky = freq[p, c, k] * np.sin(angle[p, c, k])
                acc += amp[p, c, k] * np.sin(kx * cc + ky * rr + phase[p, c, k])
            planes[p, c] = np.clip(acc, -1.0, 1.0)
    return Triplane(planes)


# ---------------------------------------------------------------------------
# MLP decoder


@dataclass(frozen=True)
class MlpWeights:
    """Dense layers ``(W, b)`` with ``W`` shaped ``(out, in)``.

    The last layer emits ``1 + 3 + F`` values: density, colour, extra features.
    """

    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise StructuralError("MLP needs at least one layer")
        fixed = []
        prev = None
        for i, (w, b) in enumerate(self.layers):
            w = np.array(w, dtype=np.float32, order="C")
            b = np.array(b, dtype=np.float32, order="C")
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise StructuralError(
                    f"layer {i}: weight {w.shape} and bias {b.shape} do not match"
                )
            if prev is not None and w.shape[1] != prev:
                raise StructuralError(
                    f"layer {i} expects {w.shape[1]} inputs but previous layer emits {prev}"
                )
            prev = w.shape[0]
            w.setflags(write=False)
            b.setflags(write=False)
            fixed.append((w, b))
        if prev < 4:
            raise StructuralError(f"output width must be >= 4, got {prev}")
        object.__setattr__(self, "layers", tuple(fixed))

    @property
    def in_features(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_features(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def extra_features(self) -> int:
        return self.out_features - 4

    def __eq__(self, other):
        if not isinstance(other, MlpWeights) or len(self.layers) != len(other.layers):
            return NotImplemented if not isinstance(other, MlpWeights) else False
        return all(
            w1.shape == w2.shape and np.array_equal(w1, w2) and np.array_equal(b1, b2)
            for (w1, b1), (w2, b2) in zip(self.layers, other.layers)
        )

    __hash__ = None


def random_mlp(seed: int, in_features: int = DEFAULT_CHANNELS,
               hidden: int = DEFAULT_HIDDEN, n_hidden: int = 2,
               extra_features: int = DEFAULT_EXTRA_FEATURES,
               scale: float = 1.0) -> MlpWeights:
    """He-style initialised decoder; deterministic in ``seed``."""
    rng = np.random.default_rng(np.uint64(seed))
    dims = [in_features] + [hidden] * n_hidden + [4 + extra_features]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.normal(0.0, scale * np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        b = rng.normal(0.0, 0.1 * scale, size=fan_out)
        layers.append((w, b))
    return MlpWeights(tuple(layers))


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def decode_batch(w: MlpWeights, features) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode ``(..., C)`` features into density, colour and extra features."""
    h = np.asarray(features, dtype=np.float64)
    if h.shape[-1] != w.in_features:
        raise StructuralError(
            f"feature length {h.shape[-1]} does not match MLP input {w.in_features}"
        )
    n = len(w.layers)
    for i, (wt, b) in enumerate(w.layers):
        h = h @ wt.T.astype(np.float64) + b
        if i < n - 1:
            h = np.where(h > 0, h, LEAKY_SLOPE * h)
    sigma = softplus(h[..., 0])
    rgb = sigmoid(h[..., 1:4])
    extra = h[..., 4:]
    return sigma, rgb, extra


def decode_mlp(w: MlpWeights, f_mean) -> tuple[float, np.ndarray, np.ndarray]:
    f_mean = np.asarray(f_mean, dtype=np.float64)
    if f_mean.ndim != 1:
        raise StructuralError(f"expected a feature vector, got shape {f_mean.shape}")
    sigma, rgb, extra = decode_batch(w, f_mean)
    return float(sigma), rgb, extra


# ---------------------------------------------------------------------------
# Binary formats


def write_triplane(tp: Triplane, path) -> None:
    header = TRIPLANE_MAGIC + struct.pack("<III", FORMAT_VERSION, tp.channels, tp.resolution)
    payload = np.ascontiguousarray(tp.planes, dtype="<f4").tobytes()
    atomic_write(Path(path), header + payload)


def read_triplane(path) -> Triplane:
    path = Path(path)
    data = path.read_bytes()
    check_magic(data, TRIPLANE_MAGIC, path)
    if len(data) < 16:
        raise FormatError("truncated header", len(data), str(path))
    version, c, r = struct.unpack_from("<III", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 4, str(path))
    if c < 1 or r < 2:
        raise FormatError(f"invalid dimensions C={c} R={r}", 8, str(path))
    expected = 3 * c * r * r * 4
    payload = data[16:]
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes, expected {expected}",
            16 + min(len(payload), expected), str(path),
        )
    planes = np.frombuffer(payload, dtype="<f4").reshape(3, c, r, r).astype(np.float32)
    try:
        return Triplane(planes)
    except StructuralError as exc:
        raise FormatError(str(exc), 16, str(path)) from exc


def triplane_payload_size(channels: int, resolution: int) -> int:
    return 3 * channels * resolution * resolution * 4


def write_mlp(w: MlpWeights, path) -> None:
    parts = [MLP_MAGIC, struct.pack("<II", FORMAT_VERSION, len(w.layers))]
    for wt, _ in w.layers:
        parts.append(struct.pack("<II", wt.shape[0], wt.shape[1]))
    for wt, b in w.layers:
        parts.append(np.ascontiguousarray(wt, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    atomic_write(Path(path), b"".join(parts))


def read_mlp(path) -> MlpWeights:
    path = Path(path)
    data = path.read_bytes()
    check_magic(data, MLP_MAGIC, path)
    if len(data) < 12:
        raise FormatError("truncated header", len(data), str(path))
    version, n = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 4, str(path))
    off = 12
    if len(data) < off + 8 * n:
        raise FormatError("truncated layer table", len(data), str(path))
    dims = [struct.unpack_from("<II", data, off + 8 * i) for i in range(n)]
    off += 8 * n
    layers = []
    for out_f, in_f in dims:
        size = (out_f * in_f + out_f) * 4
        if len(data) < off + size:
            raise FormatError("truncated layer payload", len(data), str(path))
        wt = np.frombuffer(data, dtype="<f4", count=out_f * in_f, offset=off)
        b = np.frombuffer(data, dtype="<f4", count=out_f, offset=off + out_f * in_f * 4)
        layers.append((wt.reshape(out_f, in_f), b))
        off += size
    if off != len(data):
        raise FormatError("trailing bytes after last layer", off, str(path))
    try:
        return MlpWeights(tuple(layers))
    except StructuralError as exc:
        raise FormatError(str(exc), 12, str(path)) from exc
