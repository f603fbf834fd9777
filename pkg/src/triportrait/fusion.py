"""Flow warping of triplanes, visibility-gated fusion, and the training losses."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import FormatError, ParameterError, StructuralError
from .fileio import atomic_write, check_magic
from .triplane import Triplane, bilinear_lookup
from .visibility import OcclusionMask, VisibilityTriplane, resample_mask

FLOW_MAGIC = b"FLOW"
FLOW_VERSION = 1


@dataclass(frozen=True)
class FlowField:
    """Per-plane texel displacements ``(3, 2, R, R)``: channel 0 moves along
    columns, channel 1 along rows."""

    flow: np.ndarray

    def __post_init__(self):
        f = np.array(self.flow, dtype=np.float32)
        if f.ndim != 4 or f.shape[:2] != (3, 2) or f.shape[2] != f.shape[3]:
            raise StructuralError(f"flow field must be (3, 2, R, R), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise StructuralError("flow field contains non-finite values")
        f.setflags(write=False)
        object.__setattr__(self, "flow", f)

    def __eq__(self, other):
        if not isinstance(other, FlowField):
            return NotImplemented
        return np.array_equal(self.flow, other.flow)

    __hash__ = None

    @classmethod
    def zeros(cls, resolution: int) -> FlowField:
        return cls(np.zeros((3, 2, resolution, resolution), dtype=np.float32))

    @property
    def resolution(self) -> int:
        return self.flow.shape[2]


def smooth_flow(seed: int, resolution: int, amplitude: float, n_waves: int = 3) -> FlowField:
    """Seeded low-frequency flow whose displacements never exceed ``amplitude`` texels."""
    if amplitude < 0 or not math.isfinite(amplitude):
        raise ParameterError(f"flow amplitude must be finite and >= 0, got {amplitude}")
    rng = np.random.default_rng(np.uint64(seed))
    g = np.linspace(0.0, 1.0, resolution)
    rows, cols = np.meshgrid(g, g, indexing="ij")
    flow = np.zeros((3, 2, resolution, resolution))
    for k in range(3):
        for ch in range(2):
            freq = rng.uniform(0.5, 2.0, size=(n_waves, 2))
            phase = rng.uniform(0.0, 2.0 * np.pi, size=n_waves)
            w = rng.dirichlet(np.ones(n_waves))
            for q in range(n_waves):
                flow[k, ch] += w[q] * np.sin(
                    np.pi * (freq[q, 0] * cols + freq[q, 1] * rows) + phase[q])
    return FlowField(amplitude * flow)


def warp_plane(plane: np.ndarray, du: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Backward-warp one ``(C, R, R)`` plane: ``out[r, c] = in(c + du, r + dv)``."""
    r = plane.shape[1]
    rows, cols = np.meshgrid(np.arange(r, dtype=np.float64),
                             np.arange(r, dtype=np.float64), indexing="ij")
    out = bilinear_lookup(plane, cols + du, rows + dv)
    return np.moveaxis(out, -1, 0)


def warp_triplane(tp: Triplane, flow: FlowField) -> Triplane:
    if flow.resolution != tp.resolution:
        raise StructuralError(
            f"flow resolution {flow.resolution} does not match triplane {tp.resolution}"
        )
    planes = np.empty_like(tp.planes)
    for k in range(3):
        planes[k] = warp_plane(tp.planes[k], flow.flow[k, 0].astype(np.float64),
                               flow.flow[k, 1].astype(np.float64))
    return Triplane(planes)


def warp_visibility(vis, flow: FlowField) -> np.ndarray:
    """Carry a visibility raster through the same flow; returns soft values."""
    vals = _vis_values(vis, flow.resolution)
    out = np.empty_like(vals)
    for k in range(3):
        out[k] = warp_plane(vals[k][None], flow.flow[k, 0].astype(np.float64),
                            flow.flow[k, 1].astype(np.float64))[0]
    return out


def box_blur(values: np.ndarray, radius: int) -> np.ndarray:
    if radius < 0:
        raise ParameterError(f"smoothing radius must be >= 0, got {radius}")
    if radius == 0:
        return values
    size = (1, 2 * radius + 1, 2 * radius + 1)
    return ndimage.uniform_filter(values, size=size, mode="nearest")


class VisibilityBlendFuser:
    """Keep visible regions of the undistorted triplane, fill the rest from
    the prior where the prior is visible.  Each plane is fused on its own."""

    def __init__(self, radius: int = 0):
        if radius < 0:
            raise ParameterError(f"smoothing radius must be >= 0, got {radius}")
        self.radius = radius

    def __call__(self, t_undist: Triplane, t_prior: Triplane, vis_undist, vis_prior) -> Triplane:
        if t_undist.planes.shape != t_prior.planes.shape:
            raise StructuralError(
                f"triplane shapes differ: {t_undist.planes.shape} vs {t_prior.planes.shape}"
            )
        r = t_undist.resolution
        vu = _vis_values(vis_undist, r)
        vp = _vis_values(vis_prior, r)
        out = np.empty(t_undist.planes.shape, dtype=np.float32)
        for k in range(3):
            w = box_blur(vu[k][None], self.radius)[0][None]
            pv = vp[k][None]
            tu = t_undist.planes[k].astype(np.float64)
            tpr = t_prior.planes[k].astype(np.float64)
            out[k] = w * tu + (1.0 - w) * (pv * tpr + (1.0 - pv) * tu)
        return Triplane(out)


def fuse_triplanes(t_undist: Triplane, t_prior: Triplane, vis_undist, vis_prior,
                   radius: int = 0, fuser=None) -> Triplane:
    fuser = fuser or VisibilityBlendFuser(radius)
    return fuser(t_undist, t_prior, vis_undist, vis_prior)


def _vis_values(vis, resolution: int) -> np.ndarray:
    if isinstance(vis, VisibilityTriplane):
        vals = vis.as_float()
    elif isinstance(vis, OcclusionMask):
        vals = vis.values.astype(np.float64)
    else:
        vals = np.asarray(vis, dtype=np.float64)
    if vals.ndim != 3 or vals.shape[0] != 3 or vals.shape[1] != vals.shape[2]:
        raise StructuralError(f"visibility raster must be (3, R, R), got {vals.shape}")
    return resample_mask(vals, resolution)


# ---------------------------------------------------------------------------
# Losses


def _as_array(x) -> np.ndarray:
    if isinstance(x, Triplane):
        return x.planes.astype(np.float64)
    if isinstance(x, VisibilityTriplane):
        return x.as_float()
    if isinstance(x, OcclusionMask):
        return x.values.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def _mean_abs(a, b) -> float:
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise StructuralError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def loss_undist(t_undist, t_gt) -> float:
    """Mean absolute difference over every triplane value."""
    return _mean_abs(t_undist, t_gt)


def loss_vis(vis_raw, vis_raw_gt, vis_prior, vis_prior_gt) -> float:
    return _mean_abs(vis_raw, vis_raw_gt) + _mean_abs(vis_prior, vis_prior_gt)


def loss_fusion(t_fused, t_gt, vis_gt, occ_mask) -> float:
    """Mean of ``|fused - gt| * (1 + vis + occ)``, masks broadcast over channels."""
    a, b = _as_array(t_fused), _as_array(t_gt)
    if a.shape != b.shape:
        raise StructuralError(f"shape mismatch: {a.shape} vs {b.shape}")
    vis, occ = _as_array(vis_gt), _as_array(occ_mask)
    spatial = a.shape[:1] + a.shape[2:]
    for name, m in (("visibility", vis), ("occlusion", occ)):
        if m.shape != spatial:
            raise StructuralError(f"{name} mask shape {m.shape} does not match {spatial}")
    weight = 1.0 + vis[:, None] + occ[:, None]
    return float(np.mean(np.abs(a - b) * weight))


@dataclass(frozen=True)
class LossWeights:
    w_undist: float = 1.0
    w_vis: float = 1.0
    w_fusion: float = 1.0
    w_render: float = 1.0

    def __post_init__(self):
        for name in ("w_undist", "w_vis", "w_fusion", "w_render"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def from_json(cls, obj: dict) -> LossWeights:
        unknown = set(obj) - {"w_undist", "w_vis", "w_fusion", "w_render"}
        if unknown:
            raise ParameterError(f"unknown loss weight keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})

    @classmethod
    def load(cls, path) -> LossWeights:
        return cls.from_json(json.loads(Path(path).read_text()))


def loss_total(components: dict, w: LossWeights, render_metric_value: float) -> float:
    """Weighted sum of the undistortion, visibility, fusion and render terms."""
    vals = [components["undist"], components["vis"], components["fusion"], render_metric_value]
    if not all(math.isfinite(v) for v in vals):
        raise ParameterError(f"loss components must be finite, got {vals}")
    return (w.w_undist * vals[0] + w.w_vis * vals[1]
            + w.w_fusion * vals[2] + w.w_render * vals[3])


# ---------------------------------------------------------------------------
# FLOW files


def write_flow(flow: FlowField, path) -> None:
    header = FLOW_MAGIC + struct.pack("<II", FLOW_VERSION, flow.resolution)
    atomic_write(path, header + np.ascontiguousarray(flow.flow, dtype="<f4").tobytes())


def read_flow(path) -> FlowField:
    path = Path(path)
    data = path.read_bytes()
    check_magic(data, FLOW_MAGIC, path)
    if len(data) < 12:
        raise FormatError("truncated header", len(data), str(path))
    version, r = struct.unpack_from("<II", data, 4)
    if version != FLOW_VERSION:
        raise FormatError(f"unsupported version {version}", 4, str(path))
    expected = 3 * 2 * r * r * 4
    if len(data) - 12 != expected:
        raise FormatError(f"payload is {len(data) - 12} bytes, expected {expected}",
                          12 + min(len(data) - 12, expected), str(path))
    arr = np.frombuffer(data, dtype="<f4", offset=12).reshape(3, 2, r, r)
    try:
        return FlowField(arr)
    except StructuralError as exc:
        raise FormatError(str(exc), 12, str(path)) from exc
