"""Density/colour fields that the renderer can march through.

A field maps world points ``(..., 3)`` to ``(sigma, rgb, extra)`` with shapes
``(...)``, ``(..., 3)`` and ``(..., F)``.  Implementations are immutable and
safe to evaluate from several threads at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ParameterError, StructuralError
from .triplane import DEFAULT_EXTRA_FEATURES, MlpWeights, Triplane, decode_batch, sample_points


@runtime_checkable
class Field(Protocol):
    extra_features: int

    def evaluate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ...


class TriplaneField:
    """Triplane sampled with mean bilinear features and decoded by an MLP."""

    def __init__(self, triplane: Triplane, mlp: MlpWeights):
        if mlp.in_features != triplane.channels:
            raise StructuralError(
                f"MLP expects {mlp.in_features} channels, triplane has {triplane.channels}"
            )
        self.triplane = triplane
        self.mlp = mlp
        self.extra_features = mlp.extra_features
        self._hwc = None

    def evaluate(self, points):
        return decode_batch(self.mlp, sample_points(self.triplane, points))

    @property
    def planes_hwc(self) -> np.ndarray:
        """Channel-last copy of the planes, ``(3, R, R, C)``, built lazily."""
        if self._hwc is None:
            self._hwc = np.ascontiguousarray(np.moveaxis(self.triplane.planes, 1, -1))
        return self._hwc


@dataclass(frozen=True)
class Blob:
    center: tuple
    scale: tuple
    peak: float
    color: tuple

    def __post_init__(self):
        if len(self.center) != 3 or len(self.scale) != 3 or len(self.color) != 3:
            raise StructuralError("blob center, scale and color need three components")
        if min(self.scale) <= 0:
            raise ParameterError(f"blob scales must be positive, got {self.scale}")
        if self.peak < 0:
            raise ParameterError(f"blob peak density must be >= 0, got {self.peak}")
        if min(self.color) < 0 or max(self.color) > 1:
            raise ParameterError(f"blob color must lie in [0, 1], got {self.color}")

    def to_json(self) -> dict:
        return {
            "center": list(map(float, self.center)),
            "scale": list(map(float, self.scale)),
            "peak": float(self.peak),
            "color": list(map(float, self.color)),
        }

    @classmethod
    def from_json(cls, obj) -> Blob:
        return cls(tuple(obj["center"]), tuple(obj["scale"]), float(obj["peak"]),
                   tuple(obj["color"]))


@dataclass(frozen=True)
class AnalyticBlobField:
    """Sum of axis-aligned Gaussian blobs; colour is the density-weighted mean."""

    blobs: tuple
    extra_features: int = DEFAULT_EXTRA_FEATURES

    def evaluate(self, points):
        pts = np.asarray(points, dtype=np.float64)
        shape = pts.shape[:-1]
        sigma = np.zeros(shape)
        weighted = np.zeros(shape + (3,))
        for b in self.blobs:
            z = (pts - np.asarray(b.center)) / np.asarray(b.scale)
            s = b.peak * np.exp(-0.5 * np.sum(z * z, axis=-1))
            sigma += s
            weighted += s[..., None] * np.asarray(b.color)
        with np.errstate(invalid="ignore", divide="ignore"):
            rgb = np.where(sigma[..., None] > 0, weighted / sigma[..., None], 0.0)
        return sigma, rgb, np.zeros(shape + (self.extra_features,))

    def packed(self) -> np.ndarray:
        """Blobs as rows ``(center, scale, peak, color)`` for the compiled kernel."""
        return np.array([[*b.center, *b.scale, b.peak, *b.color] for b in self.blobs],
                        dtype=np.float64).reshape(-1, 10)

    def to_json(self) -> dict:
        return {"type": "blobs", "blobs": [b.to_json() for b in self.blobs]}


@dataclass(frozen=True)
class ConstantSlab:
    """Uniform density ``sigma0`` inside an axis-aligned box, vacuum outside."""

    lo: tuple
    hi: tuple
    sigma0: float
    color: tuple = (1.0, 1.0, 1.0)
    extra_features: int = DEFAULT_EXTRA_FEATURES

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ParameterError("slab density must be >= 0")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ParameterError("slab box must have positive extent")

    def evaluate(self, points):
        pts = np.asarray(points, dtype=np.float64)
        shape = pts.shape[:-1]
        inside = np.all((pts >= np.asarray(self.lo)) & (pts <= np.asarray(self.hi)), axis=-1)
        sigma = np.where(inside, float(self.sigma0), 0.0)
        rgb = np.broadcast_to(np.asarray(self.color, dtype=np.float64), shape + (3,)).copy()
        return sigma, rgb, np.zeros(shape + (self.extra_features,))


@dataclass(frozen=True)
class EmptyField:
    extra_features: int = DEFAULT_EXTRA_FEATURES

    def evaluate(self, points):
        shape = np.shape(points)[:-1]
        return np.zeros(shape), np.zeros(shape + (3,)), np.zeros(shape + (self.extra_features,))


@dataclass(frozen=True)
class ScaledField:
    """Another field with its density multiplied by a constant."""

    base: object
    factor: float
    extra_features: int = field(init=False)

    def __post_init__(self):
        if self.factor < 0:
            raise ParameterError("density scale must be >= 0")
        object.__setattr__(self, "extra_features", self.base.extra_features)

    def evaluate(self, points):
        sigma, rgb, extra = self.base.evaluate(points)
        return sigma * self.factor, rgb, extra
