"""Procedural multi-view ground truth: camera rigs, dynamic blob scenes and
dataset generation."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import DEFAULT_FOCAL, look_at, write_camera
from .errors import ParameterError
from .fields import AnalyticBlobField, Blob
from .fileio import atomic_write
from .images import write_image
from .render import RenderConfig, render

DEFAULT_RADIUS = 2.7
DEFAULT_SPREAD_DEG = 70.0
MAX_OFFSET = 0.08
CENTER_BOUND = 0.35


@dataclass(frozen=True)
class CameraRig:
    """Cameras on a horizontal arc around the origin.

    ``yaws_deg[k]`` is the yaw of view ``k``; views are ordered from most
    frontal to most oblique so view 0 is the frontal camera.
    """

    cameras: tuple
    yaws_deg: tuple
    radius: float
    spread_deg: float
    focal: float

    @property
    def n_views(self) -> int:
        return len(self.cameras)

    def obliqueness(self, view: int) -> float:
        """|yaw| of a view as a fraction of the rig's spread."""
        return abs(self.yaws_deg[view]) / self.spread_deg if self.spread_deg else 0.0

    def to_json(self) -> dict:
        return {"n_views": self.n_views, "radius": self.radius,
                "spread_deg": self.spread_deg, "focal": self.focal,
                "yaws_deg": list(self.yaws_deg)}

    @classmethod
    def from_json(cls, obj: dict) -> CameraRig:
        return make_rig(int(obj["n_views"]), float(obj["radius"]),
                        float(obj["spread_deg"]), float(obj.get("focal", DEFAULT_FOCAL)))


def make_rig(n: int = 8, radius: float = DEFAULT_RADIUS,
             spread_deg: float = DEFAULT_SPREAD_DEG, focal: float = DEFAULT_FOCAL) -> CameraRig:
    """Evenly spaced yaws on ``[-spread, +spread]``, sorted by |yaw|."""
    if n < 2:
        raise ParameterError(f"a rig needs at least 2 cameras, got {n}")
    if radius <= 0 or focal <= 0 or spread_deg < 0:
        raise ParameterError("radius and focal must be positive, spread non-negative")
    yaws = np.linspace(-spread_deg, spread_deg, n)
    order = sorted(range(n), key=lambda k: (round(abs(yaws[k]), 9), yaws[k]))
    yaws = [float(yaws[k]) for k in order]
    cams = []
    for yaw in yaws:
        a = math.radians(yaw)
        eye = (radius * math.sin(a), 0.0, radius * math.cos(a))
        cams.append(look_at(eye, focal=focal))
    return CameraRig(tuple(cams), tuple(yaws), float(radius), float(spread_deg), float(focal))


@dataclass(frozen=True, eq=False)
class DynamicScene:
    """Blob field whose centres and densities follow smooth per-frame tracks.

    The offset of blob ``k`` at frame ``t`` is
    ``amp_k * (sin(omega_k * t + phase_k) - sin(phase_k))``, which is zero at
    ``t = 0`` and never exceeds ``2 |amp_k| <= MAX_OFFSET`` in norm.
    """

    base: AnalyticBlobField
    amplitude: np.ndarray  # (K, 3)
    omega: np.ndarray      # (K,)
    phase: np.ndarray      # (K, 3)
    density_amp: np.ndarray  # (K,)
    n_frames: int
    seed: int

    def frame(self, t: int) -> AnalyticBlobField:
        if not 0 <= t < self.n_frames:
            raise ParameterError(f"frame {t} outside 0..{self.n_frames - 1}")
        if t == 0:
            return self.base
        blobs = []
        for k, b in enumerate(self.base.blobs):
            off = self.amplitude[k] * (np.sin(self.omega[k] * t + self.phase[k])
                                       - np.sin(self.phase[k]))
            scale = 1.0 + self.density_amp[k] * math.sin(self.omega[k] * t)
            center = tuple(float(c) for c in np.asarray(b.center) + off)
            blobs.append(Blob(center, b.scale, b.peak * scale, b.color))
        return AnalyticBlobField(tuple(blobs), self.base.extra_features)

    def __eq__(self, other):
        if not isinstance(other, DynamicScene):
            return NotImplemented
        return (self.base == other.base and self.n_frames == other.n_frames
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("amplitude", "omega", "phase", "density_amp")))

    __hash__ = None

    def to_json(self) -> dict:
        return {"seed": self.seed, "n_blobs": len(self.base.blobs), "n_frames": self.n_frames}


def make_scene(seed: int, n_blobs: int = 6, n_frames: int = 1) -> DynamicScene:
    if n_blobs < 1:
        raise ParameterError(f"need at least one blob, got {n_blobs}")
    if n_frames < 1:
        raise ParameterError(f"need at least one frame, got {n_frames}")
    rng = np.random.default_rng(np.uint64(seed))
    blobs = []
    for _ in range(n_blobs):
        center = rng.uniform(-0.25, 0.25, size=3)
        scale = rng.uniform(0.06, 0.14, size=3)
        peak = rng.uniform(20.0, 60.0)
        color = rng.uniform(0.1, 0.9, size=3)
        blobs.append(Blob(tuple(map(float, center)), tuple(map(float, scale)),
                          float(peak), tuple(map(float, color))))
    direction = rng.normal(size=(n_blobs, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    amplitude = direction * rng.uniform(0.2, 1.0, size=(n_blobs, 1)) * (MAX_OFFSET / 2.0)
    omega = rng.uniform(0.3, 1.2, size=n_blobs)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n_blobs, 3))
    density_amp = rng.uniform(0.0, 0.2, size=n_blobs)
    return DynamicScene(AnalyticBlobField(tuple(blobs)), amplitude, omega, phase,
                        density_amp, n_frames, seed)


def frame_name(view: int, t: int) -> str:
    return f"view{view}_frame{t}.png"


def generate_dataset(scene: DynamicScene, rig: CameraRig, cfg: RenderConfig | None,
                     out_dir, threads: int = 1) -> dict:
    """Render every (frame, view), the frontal reference and a manifest.

    The reference image is frame 0 from view 0.
    """
    cfg = cfg or RenderConfig()
    out = Path(out_dir)
    (out / "cameras").mkdir(parents=True, exist_ok=True)
    for j, cam in enumerate(rig.cameras):
        write_camera(cam, out / "cameras" / f"view{j}.json")

    jobs = [(t, j) for t in range(scene.n_frames) for j in range(rig.n_views)]

    def job(tj):
        t, j = tj
        rgb = render(scene.frame(t), rig.cameras[j], cfg).rgb
        write_image(rgb, out / frame_name(j, t))
        if t == 0 and j == 0:
            write_image(rgb, out / "reference.png")

    if threads == 1:
        for tj in jobs:
            job(tj)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(job, jobs))

    manifest = {
        "n_views": rig.n_views,
        "n_frames": scene.n_frames,
        "reference": "reference.png",
        "frames": [
            {"t": t, "view": j, "path": frame_name(j, t), "camera": f"cameras/view{j}.json"}
            for t, j in jobs
        ],
        "scene": scene.to_json(),
        "rig": rig.to_json(),
        "render": cfg.to_json(),
    }
    atomic_write(out / "manifest.json", (json.dumps(manifest, indent=2) + "\n").encode())
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    manifest = json.loads(path.read_text())
    for key in ("n_views", "n_frames", "reference", "frames"):
        if key not in manifest:
            raise ParameterError(f"{path}: manifest lacks {key!r}")
    return manifest
