"""Shoulder-pose ray warping and colour-space augmentation.

Points below the chin line are rotated about the origin by an angle that
grows linearly from zero at ``y_chin`` to the full base angle at ``y_base``:
first a roll about the z-axis, then a yaw about the y-axis.  Only the sample
positions move; the field itself is never modified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StructuralError
from .render import RenderConfig, render

Y_CHIN = 0.2
Y_BASE = -0.5


@dataclass(frozen=True)
class ShoulderWarp:
    """Chin-anchored roll/yaw warp of ray samples.

    With ``strict_yaw`` (the default) the yaw matrix is
    ``[[c, 0, -s], [0, 1, 0], [-s, 0, c]]``, which is not a rotation for
    ``s != 0``; set it to False for the orthonormal
    ``[[c, 0, s], [0, 1, 0], [-s, 0, c]]``.
    """

    theta_base: float = 0.0
    phi_base: float = 0.0
    y_chin: float = Y_CHIN
    y_base: float = Y_BASE
    strict_yaw: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.theta_base) and np.isfinite(self.phi_base)):
            raise ParameterError("warp angles must be finite")
        if not self.y_base < self.y_chin:
            raise ParameterError("y_base must lie below y_chin")

    def angles_at(self, y):
        """Roll and yaw angles applied to points at height ``y``."""
        y = np.asarray(y, dtype=np.float64)
        d = np.where(y < self.y_chin, np.abs(y - self.y_chin), 0.0)
        frac = d / np.abs(self.y_base - self.y_chin)
        return frac * self.theta_base, frac * self.phi_base

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        below = y < self.y_chin
        th, ph = self.angles_at(y)
        c, s = np.cos(th), np.sin(th)
        x1 = c * x - s * y
        y1 = s * x + c * y
        c, s = np.cos(ph), np.sin(ph)
        if self.strict_yaw:
            x2 = c * x1 - s * z
        else:
            x2 = c * x1 + s * z
        z2 = -s * x1 + c * z
        out = np.stack([x2, y1, z2], axis=-1)
        return np.where(below[..., None], out, pts)

    @property
    def kernel_params(self) -> tuple:
        return (float(self.theta_base), float(self.phi_base), float(self.y_chin),
                float(self.y_base), int(self.strict_yaw))

    def to_json(self) -> dict:
        return {"theta_base": self.theta_base, "phi_base": self.phi_base,
                "y_chin": self.y_chin, "y_base": self.y_base, "strict_yaw": self.strict_yaw}


def roll_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_matrix(phi: float, strict: bool = True) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, 0.0, -s if strict else s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def warp_point(w: ShoulderWarp, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise StructuralError(f"point must have shape (3,), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ParameterError("point must be finite")
    return w.apply(p)


def render_with_shoulder(fld, cam, cfg: RenderConfig | None, w: ShoulderWarp,
                         threads: int = 1, backend: str | None = None):
    cfg = (cfg or RenderConfig()).with_(warp=w)
    return render(fld, cam, cfg, threads=threads, backend=backend)


# ---------------------------------------------------------------------------
# Colour augmentation

BRIGHTNESS_RANGE = (-0.2, 0.2)
CONTRAST_RANGE = (0.8, 1.25)
SATURATION_RANGE = (0.7, 1.3)
HUE_RANGE_DEG = (-18.0, 18.0)


@dataclass(frozen=True)
class ColorAugment:
    brightness: float = 0.0
    contrast: float = 1.0
    saturation: float = 1.0
    hue_deg: float = 0.0
    seed: int | None = None

    @classmethod
    def sample(cls, seed: int) -> ColorAugment:
        rng = np.random.default_rng(np.uint64(seed))
        return cls(
            brightness=float(rng.uniform(*BRIGHTNESS_RANGE)),
            contrast=float(np.exp(rng.uniform(*np.log(CONTRAST_RANGE)))),
            saturation=float(rng.uniform(*SATURATION_RANGE)),
            hue_deg=float(rng.uniform(*HUE_RANGE_DEG)),
            seed=seed,
        )

    def to_json(self) -> dict:
        return {"brightness": self.brightness, "contrast": self.contrast,
                "saturation": self.saturation, "hue_deg": self.hue_deg}


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    span = maxc - minc
    safe = np.where(span > 0, span, 1.0)
    s = np.where(maxc > 0, span / np.where(maxc > 0, maxc, 1.0), 0.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices = [
        np.stack([v, t, p], axis=-1), np.stack([q, v, p], axis=-1),
        np.stack([p, v, t], axis=-1), np.stack([p, q, v], axis=-1),
        np.stack([t, p, v], axis=-1), np.stack([v, p, q], axis=-1),
    ]
    out = np.zeros(hsv.shape)
    for k, c in enumerate(choices):
        out = np.where((i == k)[..., None], c, out)
    return np.where((s == 0)[..., None], v[..., None], out)


def color_augment(img, a: ColorAugment) -> np.ndarray:
    """Brightness, contrast about 0.5, then hue/saturation in HSV; clamped.

    Steps whose parameter is at its identity value are skipped so identity
    parameters return the input bit-exactly.
    """
    x = np.array(img, dtype=np.float64)
    if x.ndim < 1 or x.shape[-1] != 3:
        raise StructuralError(f"expected an RGB raster, got {x.shape}")
    if a.brightness != 0.0:
        x = x + a.brightness
    if a.contrast != 1.0:
        x = (x - 0.5) * a.contrast + 0.5
    x = np.clip(x, 0.0, 1.0)
    if a.hue_deg != 0.0 or a.saturation != 1.0:
        hsv = rgb_to_hsv(x)
        hsv[..., 0] = (hsv[..., 0] + a.hue_deg / 360.0) % 1.0
        hsv[..., 1] = np.clip(hsv[..., 1] * a.saturation, 0.0, 1.0)
        x = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    return x
