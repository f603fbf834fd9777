"""Reconstructors for the evaluation harness.

A reconstructor is called as ``reconstructor(input_view, frame)`` and returns
a field to render from every evaluation view.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .fields import AnalyticBlobField, Blob, TriplaneField
from .synth import CameraRig, DynamicScene
from .triplane import MlpWeights, random_mlp, read_triplane


@dataclass(frozen=True)
class IdentityReconstructor:
    """Oracle that returns the ground-truth field of the frame."""

    scene: DynamicScene

    def __call__(self, input_view: int, t: int):
        return self.scene.frame(t)


@dataclass(frozen=True)
class PerturbReconstructor:
    """Ground truth with seeded blob displacements along the input camera's
    optical axis.

    Depth errors are nearly invisible from the input view and show up as
    lateral misplacement from every other view, mimicking single-view
    lifting.  The displacement scale is ``sigma * (0.25 + obliqueness)``, so
    oblique inputs degrade more.
    """

    scene: DynamicScene
    rig: CameraRig
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ParameterError(f"perturbation sigma must be >= 0, got {self.sigma}")

    def __call__(self, input_view: int, t: int):
        base = self.scene.frame(t)
        rng = np.random.default_rng([self.seed, t, input_view])
        axis = self.rig.cameras[input_view].forward
        mag = self.sigma * (0.25 + self.rig.obliqueness(input_view))
        blobs = []
        for b in base.blobs:
            shift = mag * rng.standard_normal() * axis
            blobs.append(Blob(tuple(float(c) for c in np.asarray(b.center) + shift),
                              b.scale, b.peak, b.color))
        return AnalyticBlobField(tuple(blobs), base.extra_features)


class ExternalReconstructor:
    """Runs ``<command> <input image> <output triplane>`` and decodes the
    resulting triplane with ``mlp``."""

    serial = False

    def __init__(self, command: str, image_paths: dict, mlp: MlpWeights | None = None,
                 timeout: float = 600.0):
        self.argv = shlex.split(command)
        if not self.argv:
            raise ParameterError("external reconstructor needs a command")
        self.image_paths = image_paths
        self.mlp = mlp
        self.timeout = timeout

    def __call__(self, input_view: int, t: int):
        image = self.image_paths[(t, input_view)]
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "lifted.trpl"
            proc = subprocess.run([*self.argv, str(image), str(out)], capture_output=True,
                                  text=True, timeout=self.timeout)
            if proc.returncode != 0:
                raise RuntimeError(f"reconstructor exited {proc.returncode}: {proc.stderr.strip()}")
            tp = read_triplane(out)
        mlp = self.mlp or random_mlp(0, in_features=tp.channels)
        return TriplaneField(tp, mlp)


def parse_reconstructor(spec: str, scene: DynamicScene, rig: CameraRig,
                        image_paths: dict | None = None, seed: int = 0,
                        mlp: MlpWeights | None = None):
    """``identity``, ``perturb:<sigma>`` or ``external:<command>``."""
    if spec == "identity":
        return IdentityReconstructor(scene)
    if spec.startswith("perturb:"):
        try:
            sigma = float(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ParameterError(f"bad perturbation in {spec!r}") from exc
        return PerturbReconstructor(scene, rig, sigma, seed)
    if spec.startswith("external:"):
        return ExternalReconstructor(spec.split(":", 1)[1], image_paths or {}, mlp)
    raise ParameterError(f"unknown reconstructor {spec!r}")
