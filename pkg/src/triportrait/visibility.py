"""Visibility triplanes from rendered depth, and occlusion masks.

A depth image is lifted to a point cloud along its camera rays; the points
are projected orthographically onto the xy, xz and yz planes and every texel
that receives a point is marked visible.  Texel addressing uses the same
align-corners mapping as triplane sampling, rounded to the nearest texel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .camera import Camera, generate_rays
from .errors import StructuralError
from .render import RenderConfig, render_depth
from .triplane import PLANE_AXES

DEFAULT_VIS_RESOLUTION = 256


@dataclass(frozen=True)
class VisibilityTriplane:
    masks: np.ndarray  # (3, R, R) uint8 in {0, 1}

    def __post_init__(self):
        m = np.asarray(self.masks)
        if m.ndim != 3 or m.shape[0] != 3 or m.shape[1] != m.shape[2]:
            raise StructuralError(f"visibility triplane must be (3, R, R), got {m.shape}")
        if not np.all((m == 0) | (m == 1)):
            raise StructuralError("visibility values must be exactly 0 or 1")
        m = m.astype(np.uint8)
        m.setflags(write=False)
        object.__setattr__(self, "masks", m)

    def __eq__(self, other):
        if not isinstance(other, VisibilityTriplane):
            return NotImplemented
        return np.array_equal(self.masks, other.masks)

    __hash__ = None

    @property
    def resolution(self) -> int:
        return self.masks.shape[1]

    def as_float(self) -> np.ndarray:
        return self.masks.astype(np.float64)

    def union(self, other: VisibilityTriplane) -> VisibilityTriplane:
        _check_same(self.masks, other.masks)
        return VisibilityTriplane(self.masks | other.masks)


@dataclass(frozen=True)
class OcclusionMask:
    values: np.ndarray  # (3, R, R) in [0, 1]

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[0] != 3 or v.shape[1] != v.shape[2]:
            raise StructuralError(f"occlusion mask must be (3, R, R), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, OcclusionMask):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


def depth_to_points(depth, cam: Camera, size: tuple[int, int] | None = None) -> np.ndarray:
    """Lift valid depth pixels to world points ``origin + depth * direction``.

    Pixels that are NaN or negative (the file sentinel) are skipped.
    ``size`` is an optional ``(width, height)`` the raster must match.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise StructuralError(f"depth raster must be 2-D, got {depth.shape}")
    h, w = depth.shape
    if size is not None and tuple(size) != (w, h):
        raise StructuralError(f"depth raster is {w}x{h}, camera image is {size[0]}x{size[1]}")
    origins, dirs = generate_rays(cam, w, h)
    valid = np.isfinite(depth) & (depth >= 0)
    return origins[valid] + depth[valid][:, None] * dirs[valid]


def texel_index(coord, resolution: int) -> np.ndarray:
    u = (np.asarray(coord, dtype=np.float64) + 0.5) * (resolution - 1)
    return np.clip(np.rint(u), 0, resolution - 1).astype(np.intp)


def rasterize_visibility(points, resolution: int = DEFAULT_VIS_RESOLUTION,
                         dilation: int = 1) -> VisibilityTriplane:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    masks = np.zeros((3, resolution, resolution), dtype=np.uint8)
    for k, (ca, ra) in enumerate(PLANE_AXES):
        cols = texel_index(pts[:, ca], resolution)
        rows = texel_index(pts[:, ra], resolution)
        masks[k, rows, cols] = 1
    if dilation > 0 and pts.size:
        size = (1, 2 * dilation + 1, 2 * dilation + 1)
        masks = ndimage.maximum_filter(masks, size=size, mode="constant", cval=0)
    return VisibilityTriplane(masks)


def visibility_for(fld, cam: Camera, resolution: int = DEFAULT_VIS_RESOLUTION,
                   cfg: RenderConfig | None = None, dilation: int = 1,
                   threads: int = 1) -> VisibilityTriplane:
    cfg = cfg or RenderConfig()
    depth = render_depth(fld, cam, cfg, threads=threads)
    return rasterize_visibility(depth_to_points(depth, cam), resolution, dilation)


def occlusion_mask(vis_frontal: VisibilityTriplane, vis_input: VisibilityTriplane) -> OcclusionMask:
    """Texels visible from the frontal view but not from the input view."""
    _check_same(vis_frontal.masks, vis_input.masks)
    diff = vis_frontal.masks.astype(np.float32) - vis_input.masks.astype(np.float32)
    return OcclusionMask(np.clip(diff, 0.0, 1.0))


def resample_mask(values, resolution: int) -> np.ndarray:
    """Nearest-texel resample of ``(3, R, R)`` rasters to a new resolution."""
    values = np.asarray(values)
    src = values.shape[1]
    if src == resolution:
        return values
    idx = texel_index(np.linspace(-0.5, 0.5, resolution), src)
    return values[:, idx][:, :, idx]


def _check_same(a, b) -> None:
    if a.shape != b.shape:
        raise StructuralError(f"resolution mismatch: {a.shape} vs {b.shape}")
