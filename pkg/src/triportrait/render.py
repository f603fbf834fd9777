"""Ray-marched volume rendering of RGB, feature, depth and alpha images.

Rays are split into fixed row tiles.  Tiling never depends on the thread
count and every pixel is computed independently, so output is bit-identical
for any number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .camera import Camera, generate_rays
from .errors import NumericalError, ParameterError
from .fields import AnalyticBlobField, TriplaneField

TILE_ROWS = 8
DEPTH_EPS = 1e-8
DEPTH_VALID_ALPHA = 0.5


@dataclass(frozen=True)
class RenderConfig:
    width: int = 128
    height: int = 128
    n_samples: int = 64
    t_near: float = 1.8
    t_far: float = 3.6
    background: tuple = (1.0, 1.0, 1.0)
    warp: object = None
    jitter: bool = False
    jitter_seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ParameterError(f"image size must be positive, got {self.width}x{self.height}")
        if self.n_samples < 2:
            raise ParameterError(f"n_samples must be >= 2, got {self.n_samples}")
        if not 0.0 <= self.t_near < self.t_far:
            raise ParameterError(f"need 0 <= t_near < t_far, got {self.t_near}, {self.t_far}")
        if len(self.background) != 3:
            raise ParameterError("background must have three components")

    def with_(self, **changes) -> RenderConfig:
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return RenderConfig(**values)

    def to_json(self) -> dict:
        return {
            "width": self.width, "height": self.height, "n_samples": self.n_samples,
            "t_near": self.t_near, "t_far": self.t_far,
            "background": list(self.background),
            "jitter": self.jitter, "jitter_seed": self.jitter_seed,
        }


@dataclass
class RenderedImage:
    rgb: np.ndarray
    feature: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, RenderedImage):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k), equal_nan=True)
            for k in ("rgb", "feature", "depth", "alpha")
        )


def sample_depths(cfg: RenderConfig, n_rays: int, tile_key: int = 0) -> tuple[np.ndarray, float]:
    """Per-ray sample distances ``(n_rays, N_s)`` and the bin width.

    Samples sit at bin midpoints unless ``cfg.jitter`` is set, in which case
    each sample is drawn uniformly inside its bin from a stream keyed on
    ``(jitter_seed, tile_key)``.
    """
    delta = (cfg.t_far - cfg.t_near) / cfg.n_samples
    idx = np.arange(cfg.n_samples, dtype=np.float64)
    if cfg.jitter:
        rng = np.random.default_rng([cfg.jitter_seed, tile_key])
        offs = rng.random((n_rays, cfg.n_samples))
    else:
        offs = np.full((n_rays, cfg.n_samples), 0.5)
    ts = cfg.t_near + (idx + offs) * delta
    return np.ascontiguousarray(ts), delta


def composite(sigma, rgb, extra, ts, delta, background):
    """Alpha-composite ``(n, N_s)`` samples into per-ray outputs."""
    a = 1.0 - np.exp(-sigma * delta)
    one_minus = 1.0 - a
    trans = np.ones_like(a)
    if a.shape[1] > 1:
        trans[:, 1:] = np.cumprod(one_minus[:, :-1], axis=1)
    w = trans * a
    t_final = trans[:, -1] * one_minus[:, -1]
    alpha = np.sum(w, axis=1)
    out_rgb = np.einsum("ns,nsc->nc", w, rgb) + t_final[:, None] * np.asarray(background)
    out_extra = np.einsum("ns,nsc->nc", w, extra)
    depth = np.sum(w * ts, axis=1) / np.maximum(alpha, DEPTH_EPS)
    return out_rgb, np.concatenate([out_rgb, out_extra], axis=1), depth, alpha, w


def march_rays(fld, origins, dirs, ts, delta, background, warp=None):
    """Generic numpy ray march for any field.

    Returns ``(rgb, feature, depth, alpha, bad)`` where ``bad`` is the index
    of the first ray whose samples were non-finite, or -1.
    """
    pts = origins[:, None, :] + ts[..., None] * dirs[:, None, :]
    if warp is not None:
        pts = warp.apply(pts)
    sigma, rgb, extra = fld.evaluate(pts)
    sigma = np.asarray(sigma, dtype=np.float64)
    rgb = np.asarray(rgb, dtype=np.float64)
    extra = np.asarray(extra, dtype=np.float64)
    finite = np.isfinite(sigma).all(axis=1) & np.isfinite(rgb).all(axis=(1, 2))
    out_rgb, feat, depth, alpha, _ = composite(sigma, rgb, extra, ts, delta, background)
    finite &= np.isfinite(out_rgb).all(axis=1) & np.isfinite(depth)
    bad = int(np.argmin(finite)) if not finite.all() else -1
    return out_rgb, feat, depth, alpha, bad


def _tile_job(fld, origins, dirs, cfg, row0, backend):
    n = origins.shape[0]
    ts, delta = sample_depths(cfg, n, tile_key=row0)
    bg = np.asarray(cfg.background, dtype=np.float64)
    ext = kernels.compiled_kernels(backend)
    warp_params = None
    if ext is not None and cfg.warp is not None:
        warp_params = getattr(cfg.warp, "kernel_params", None)
        if warp_params is None:
            ext = None
    if ext is not None and isinstance(fld, TriplaneField):
        rgb = np.empty((n, 3))
        feat = np.empty((n, 3 + fld.extra_features))
        depth = np.empty(n)
        alpha = np.empty(n)
        bad = ext.render_triplane_tile(fld.planes_hwc, fld.mlp.layers, origins, dirs, ts,
                                       delta, bg, warp_params, rgb, feat, depth, alpha)
        return rgb, feat, depth, alpha, bad
    if ext is not None and isinstance(fld, AnalyticBlobField) and fld.blobs:
        rgb = np.empty((n, 3))
        depth = np.empty(n)
        alpha = np.empty(n)
        bad = ext.render_blob_tile(fld.packed(), origins, dirs, ts, delta, bg,
                                   warp_params, rgb, depth, alpha)
        feat = np.concatenate([rgb, np.zeros((n, fld.extra_features))], axis=1)
        return rgb, feat, depth, alpha, bad
    return march_rays(fld, origins, dirs, ts, delta, bg, cfg.warp)


def render(fld, cam: Camera, cfg: RenderConfig | None = None, threads: int = 1,
           backend: str | None = None) -> RenderedImage:
    cfg = cfg or RenderConfig()
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    backend = backend or kernels.backend()
    if backend not in kernels.available():
        raise ParameterError(f"backend {backend!r} not available; have {kernels.available()}")
    h, w = cfg.height, cfg.width
    origins, dirs = generate_rays(cam, w, h)
    origins = origins.reshape(-1, 3)
    dirs = dirs.reshape(-1, 3)

    starts = list(range(0, h, TILE_ROWS))

    def job(row0):
        lo, hi = row0 * w, min(row0 + TILE_ROWS, h) * w
        return _tile_job(fld, np.ascontiguousarray(origins[lo:hi]),
                         np.ascontiguousarray(dirs[lo:hi]), cfg, row0, backend)

    if threads == 1:
        results = [job(r) for r in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, starts))

    for row0, res in zip(starts, results):
        if res[4] >= 0:
            pix = row0 * w + res[4]
            raise NumericalError(f"non-finite field output at pixel (row={pix // w}, col={pix % w})")
    rgb = np.concatenate([r[0] for r in results]).reshape(h, w, 3)
    feat = np.concatenate([r[1] for r in results]).reshape(h, w, -1)
    depth = np.concatenate([r[2] for r in results]).reshape(h, w)
    alpha = np.concatenate([r[3] for r in results]).reshape(h, w)
    return RenderedImage(rgb=rgb, feature=feat, depth=depth, alpha=alpha)


def render_depth(fld, cam: Camera, cfg: RenderConfig | None = None, threads: int = 1,
                 backend: str | None = None) -> np.ndarray:
    """Expected-depth raster; pixels with alpha below 0.5 are NaN."""
    img = render(fld, cam, cfg, threads=threads, backend=backend)
    return np.where(img.alpha >= DEPTH_VALID_ALPHA, img.depth, np.nan)
