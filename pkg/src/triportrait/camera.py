"""25-parameter pinhole camera and ray generation.

Parameters are a row-major 4x4 camera-to-world matrix followed by a row-major
3x3 intrinsic matrix whose focal lengths and principal point are expressed in
units of the image size.  Camera space follows the OpenCV convention: +x
right, +y down, +z along the optical axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .fileio import atomic_write

DEFAULT_FOCAL = 3.12
ORTHONORMAL_TOL = 1e-5


@dataclass(frozen=True)
class Camera:
    extrinsic: np.ndarray
    intrinsic: np.ndarray

    def __post_init__(self):
        ext = np.array(self.extrinsic, dtype=np.float64).reshape(4, 4)
        intr = np.array(self.intrinsic, dtype=np.float64).reshape(3, 3)
        if not (np.all(np.isfinite(ext)) and np.all(np.isfinite(intr))):
            raise ParameterError("camera parameters must be finite")
        rot = ext[:3, :3]
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHONORMAL_TOL:
            raise ParameterError("extrinsic rotation block is not orthonormal")
        if np.linalg.det(rot) < 0:
            raise ParameterError("extrinsic rotation is a reflection")
        if not np.allclose(ext[3], [0.0, 0.0, 0.0, 1.0], atol=ORTHONORMAL_TOL):
            raise ParameterError("extrinsic last row must be (0, 0, 0, 1)")
        if intr[0, 0] <= 0 or intr[1, 1] <= 0:
            raise ParameterError("focal lengths must be positive")
        if abs(np.linalg.det(intr)) < 1e-12:
            raise ParameterError("intrinsic matrix is singular")
        ext.setflags(write=False)
        intr.setflags(write=False)
        object.__setattr__(self, "extrinsic", ext)
        object.__setattr__(self, "intrinsic", intr)

    @classmethod
    def from_params(cls, params) -> Camera:
        params = np.asarray(params, dtype=np.float64).ravel()
        if params.size != 25:
            raise ParameterError(f"camera needs 25 parameters, got {params.size}")
        return cls(params[:16], params[16:])

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.extrinsic.ravel(), self.intrinsic.ravel()])

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsic[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.extrinsic[:3, 3]

    @property
    def forward(self) -> np.ndarray:
        return self.extrinsic[:3, 2]

    def to_json(self) -> dict:
        return {
            "extrinsic": [float(v) for v in self.extrinsic.ravel()],
            "intrinsic": [float(v) for v in self.intrinsic.ravel()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> Camera:
        try:
            return cls(obj["extrinsic"], obj["intrinsic"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"malformed camera JSON: {exc}") from exc

    def __eq__(self, other):
        if not isinstance(other, Camera):
            return NotImplemented
        return np.array_equal(self.params, other.params)

    __hash__ = None


def normalized_intrinsic(focal: float = DEFAULT_FOCAL, cx: float = 0.5,
                         cy: float = 0.5) -> np.ndarray:
    return np.array([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]])


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0),
            focal: float = DEFAULT_FOCAL) -> Camera:
    """Camera at ``eye`` whose optical axis passes through ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ParameterError("eye and target coincide")
    forward /= norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-12:
        raise ParameterError("up vector is parallel to the viewing direction")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    ext = np.eye(4)
    ext[:3, 0] = right
    ext[:3, 1] = down
    ext[:3, 2] = forward
    ext[:3, 3] = eye
    return Camera(ext, normalized_intrinsic(focal))


def generate_rays(cam: Camera, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ray origins and unit directions, each shaped ``(H, W, 3)``.

    Pixel ``(u, v)`` (column, row) is sampled at its centre,
    ``((u + 0.5) / W, (v + 0.5) / H)`` in normalized image coordinates.
    """
    if width < 1 or height < 1:
        raise ParameterError(f"image size must be positive, got {width}x{height}")
    try:
        k_inv = np.linalg.inv(cam.intrinsic)
    except np.linalg.LinAlgError as exc:
        raise ParameterError("intrinsic matrix is singular") from exc
    u = (np.arange(width) + 0.5) / width
    v = (np.arange(height) + 0.5) / height
    uu, vv = np.meshgrid(u, v)
    pix = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    dirs = pix @ k_inv.T @ cam.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(cam.position, dirs.shape).copy()
    return origins, dirs


def read_camera(path) -> Camera:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid camera JSON: {exc.msg}", exc.pos, str(path)) from exc
    return Camera.from_json(obj)


def write_camera(cam: Camera, path) -> None:
    atomic_write(path, (json.dumps(cam.to_json(), indent=2) + "\n").encode())
