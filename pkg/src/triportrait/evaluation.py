"""Multi-view evaluation: image metrics, the T x N x N score tensor and its
aggregates.

``S[t, i, j]`` scores the reconstruction lifted from input view ``i`` at
frame ``t``, rendered from evaluation view ``j``, against the ground truth
of view ``j`` at frame ``t``.  Entries whose reconstruction failed are NaN
and are excluded from every aggregate.
"""

from __future__ import annotations

import csv
import logging
import math
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .errors import DegenerateVarianceError, EmptyDataError, ParameterError, StructuralError
from .fileio import atomic_write
from .images import dequantize, quantize, write_image
from .render import RenderConfig, render

log = logging.getLogger(__name__)

PSNR_CAP = 99.0
DEFAULT_VIEWS = 8


class ImageMetric(Protocol):
    name: str
    higher_better: bool

    def __call__(self, rendered: np.ndarray, gt: np.ndarray) -> float:
        ...


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise StructuralError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1], capped at 99."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def l1_metric(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean(np.abs(a - b)))


@dataclass(frozen=True)
class FunctionMetric:
    name: str
    fn: Callable
    higher_better: bool

    def __call__(self, rendered, gt) -> float:
        return float(self.fn(rendered, gt))


PSNR = FunctionMetric("psnr", psnr, True)
L1 = FunctionMetric("l1", l1_metric, False)


@dataclass(frozen=True)
class SubprocessMetric:
    """External metric: ``argv + [rendered.png, gt.png]`` prints one number."""

    name: str
    argv: tuple
    higher_better: bool = False
    timeout: float = 120.0

    def __call__(self, rendered, gt) -> float:
        with tempfile.TemporaryDirectory() as tmp:
            rp, gp = Path(tmp) / "rendered.png", Path(tmp) / "gt.png"
            write_image(rendered, rp)
            write_image(gt, gp)
            proc = subprocess.run([*self.argv, str(rp), str(gp)], capture_output=True,
                                  text=True, timeout=self.timeout)
        if proc.returncode != 0:
            raise RuntimeError(f"metric {self.name} exited {proc.returncode}: {proc.stderr.strip()}")
        try:
            return float(proc.stdout.strip())
        except ValueError as exc:
            raise RuntimeError(f"metric {self.name} printed {proc.stdout!r}") from exc


METRICS = {"psnr": PSNR, "l1": L1}


def get_metric(spec: str):
    """``psnr``, ``l1``, or ``external:<cmd> [args...]``."""
    if spec in METRICS:
        return METRICS[spec]
    if spec.startswith("external:"):
        argv = tuple(shlex.split(spec[len("external:"):]))
        if not argv:
            raise ParameterError("external metric needs a command")
        return SubprocessMetric(name=spec, argv=argv)
    raise ParameterError(f"unknown metric {spec!r}; expected psnr, l1 or external:<cmd>")


# ---------------------------------------------------------------------------
# Score tensor


@dataclass
class ScoreTensor:
    scores: np.ndarray
    metric: str = "psnr"
    cameras: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 3 or s.shape[1] != s.shape[2]:
            raise StructuralError(f"score tensor must be (T, N, N), got {s.shape}")
        if s.shape[1] < 2:
            raise StructuralError(f"score tensor needs N >= 2 views, got {s.shape[1]}")
        if np.any(np.isinf(s)):
            raise StructuralError("score tensor contains infinite entries")
        self.scores = s

    @property
    def n_frames(self) -> int:
        return self.scores.shape[0]

    @property
    def n_views(self) -> int:
        return self.scores.shape[1]

    def transposed(self) -> ScoreTensor:
        """Swap the input-view and evaluation-view axes."""
        return ScoreTensor(np.swapaxes(self.scores, 1, 2).copy(), self.metric, self.cameras)

    def time_mean(self) -> np.ndarray:
        s = self.scores
        present = ~np.isnan(s)
        counts = present.sum(axis=0)
        sums = np.where(present, s, 0.0).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def _off_diagonal(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def overall_quality(S: ScoreTensor) -> float:
    vals = S.scores[~np.isnan(S.scores)]
    if vals.size == 0:
        raise EmptyDataError("score tensor has no present entries")
    return float(np.mean(vals))


def nvs_quality(S: ScoreTensor) -> float:
    """Mean over entries whose input view differs from the evaluation view."""
    if S.n_views < 2:
        raise DegenerateVarianceError("novel-view quality needs N >= 2")
    sel = S.scores[:, _off_diagonal(S.n_views)]
    vals = sel[~np.isnan(sel)]
    if vals.size == 0:
        raise EmptyDataError("no present off-diagonal entries")
    return float(np.mean(vals))


def _mean_slice_std(scores: np.ndarray) -> float:
    """Mean over (t, i) of the sample std of ``scores[t, i, j]`` for ``j != i``."""
    t_count, n, _ = scores.shape
    if n < 3:
        raise DegenerateVarianceError(f"view variation needs N >= 3, got {n}")
    mask = _off_diagonal(n)
    stds = []
    for t in range(t_count):
        for i in range(n):
            row = scores[t, i][mask[i]]
            row = row[~np.isnan(row)]
            if row.size >= 2:
                stds.append(np.std(row, ddof=1))
    if not stds:
        raise EmptyDataError("no slice has two or more present entries")
    return float(np.mean(stds))


def novel_view_variation(S: ScoreTensor) -> float:
    """Spread across evaluation views for a fixed input view, averaged."""
    return _mean_slice_std(S.scores)


def input_view_variation(S: ScoreTensor) -> float:
    """Spread across input views for a fixed evaluation view, averaged."""
    return _mean_slice_std(np.swapaxes(S.scores, 1, 2))


def summarize(S: ScoreTensor) -> dict:
    return {
        "metric": S.metric,
        "n_frames": S.n_frames,
        "n_views": S.n_views,
        "overall": overall_quality(S),
        "nvs": nvs_quality(S),
        "nvv": novel_view_variation(S),
        "ivv": input_view_variation(S),
        "missing": [list(m) for m in S.missing],
    }


def build_score_tensor(reconstructor, cameras, gt_frames, metric=PSNR,
                       cfg: RenderConfig | None = None, threads: int = 1,
                       quantize_renders: bool = True) -> ScoreTensor:
    """Reconstruct from every (frame, input view), render every view, score.

    ``reconstructor(i, t)`` returns a field.  ``gt_frames`` is indexed
    ``[t][j]`` with RGB arrays.  Renders are passed through the same 8-bit
    quantization as stored ground truth unless ``quantize_renders`` is False.
    A reconstructor exposing ``serial = True`` is never called concurrently.
    """
    n = len(cameras)
    if n < 2:
        raise ParameterError(f"need at least 2 cameras, got {n}")
    gts = [[np.asarray(im, dtype=np.float64) for im in frame] for frame in gt_frames]
    t_count = len(gts)
    if t_count < 1:
        raise ParameterError("need at least one frame")
    shapes = {im.shape for frame in gts for im in frame}
    if len(shapes) != 1 or any(len(frame) != n for frame in gts):
        raise StructuralError("ground-truth frames must be T x N images of one size")
    h, w = next(iter(shapes))[:2]
    cfg = (cfg or RenderConfig()).with_(width=w, height=h)
    metric_fn = metric if callable(metric) else get_metric(metric)
    name = getattr(metric_fn, "name", "metric")

    def job(ti):
        t, i = ti
        try:
            fld = reconstructor(i, t)
            row = np.empty(n)
            for j, cam in enumerate(cameras):
                rgb = render(fld, cam, cfg).rgb
                if quantize_renders:
                    rgb = dequantize(quantize(rgb))
                row[j] = metric_fn(rgb, gts[t][j])
            return row, None
        except Exception as exc:  # recorded, excluded from aggregates
            log.warning("reconstruction (t=%d, i=%d) failed: %s", t, i, exc)
            return None, f"{type(exc).__name__}: {exc}"

    pairs = [(t, i) for t in range(t_count) for i in range(n)]
    serial = getattr(reconstructor, "serial", False)
    if threads == 1 or serial:
        results = [job(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, pairs))

    scores = np.full((t_count, n, n), np.nan)
    missing = []
    for (t, i), (row, err) in zip(pairs, results):
        if row is None:
            missing.append((t, i, err))
        else:
            scores[t, i] = row
    return ScoreTensor(scores, name, list(cameras), missing)


# ---------------------------------------------------------------------------
# Export


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def export_scores(S: ScoreTensor, path) -> tuple[Path, Path]:
    """Write the long-form CSV and the time-averaged N x N CSV beside it."""
    path = Path(path)
    mean_path = path.with_name(path.stem + "_mean" + path.suffix)
    lines = ["t,i,j,score"]
    for t in range(S.n_frames):
        for i in range(S.n_views):
            for j in range(S.n_views):
                lines.append(f"{t},{i},{j},{_fmt(S.scores[t, i, j])}")
    atomic_write(path, ("\n".join(lines) + "\n").encode())
    tm = S.time_mean()
    mean_lines = ["i," + ",".join(f"j{j}" for j in range(S.n_views))]
    for i in range(S.n_views):
        mean_lines.append(f"{i}," + ",".join(_fmt(v) for v in tm[i]))
    atomic_write(mean_path, ("\n".join(mean_lines) + "\n").encode())
    return path, mean_path


def read_scores(path) -> ScoreTensor:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyDataError(f"{path}: no score rows")
    t_count = max(int(r["t"]) for r in rows) + 1
    n = max(int(r["i"]) for r in rows) + 1
    s = np.full((t_count, n, n), np.nan)
    for r in rows:
        s[int(r["t"]), int(r["i"]), int(r["j"])] = float(r["score"]) if r["score"] else np.nan
    return ScoreTensor(s)


# Perceptually ordered anchors, dark blue -> teal -> yellow.
_ANCHORS = np.array([
    [0.267, 0.005, 0.329],
    [0.230, 0.322, 0.546],
    [0.128, 0.567, 0.551],
    [0.369, 0.789, 0.383],
    [0.993, 0.906, 0.144],
])


def colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB by piecewise-linear anchor interpolation."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * (len(_ANCHORS) - 1)
    lo = np.minimum(np.floor(v).astype(int), len(_ANCHORS) - 2)
    f = (v - lo)[..., None]
    return _ANCHORS[lo] * (1.0 - f) + _ANCHORS[lo + 1] * f


def heatmap_image(S: ScoreTensor, cell: int = 32) -> np.ndarray:
    tm = S.time_mean()
    present = tm[~np.isnan(tm)]
    if present.size == 0:
        raise EmptyDataError("score tensor has no present entries")
    lo, hi = present.min(), present.max()
    norm = np.zeros_like(tm) if hi == lo else (tm - lo) / (hi - lo)
    rgb = colormap(np.nan_to_num(norm))
    rgb[np.isnan(tm)] = 0.5
    return np.repeat(np.repeat(rgb, cell, axis=0), cell, axis=1)


def render_heatmap(S: ScoreTensor, path, cell: int = 32) -> None:
    write_image(heatmap_image(S, cell), path)
