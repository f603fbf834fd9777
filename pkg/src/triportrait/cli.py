"""Command-line entry point.

Every subcommand accepts ``--config``, ``--seed``, ``--threads`` and
``--out``.  Failures print one JSON line to stderr and exit with 2 (usage),
3 (data) or 4 (numerical).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .augment import ShoulderWarp, render_with_shoulder
from .camera import read_camera
from .errors import FormatError, TriportraitError
from .fields import TriplaneField
from .fusion import (LossWeights, fuse_triplanes, loss_fusion, loss_total,
                     loss_undist, loss_vis, read_flow, smooth_flow, warp_triplane)
from .images import read_image, read_raster, write_image, write_raster
from .reconstruct import parse_reconstructor
from .render import RenderConfig, render
from .synth import CameraRig, generate_dataset, load_manifest, make_rig, make_scene
from .triplane import random_mlp, read_mlp, read_triplane, write_triplane
from .visibility import (depth_to_points, occlusion_mask,
                         rasterize_visibility)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

_RENDER_KEYS = {"width", "height", "n_samples", "t_near", "t_far", "background",
                "jitter", "jitter_seed"}
_RIG_KEYS = {"n_views", "radius", "spread_deg", "focal"}
_SCENE_KEYS = {"n_blobs", "n_frames"}
_TOP_KEYS = {"render", "rig", "scene", "loss_weights", "metric", "reconstructor", "seed",
             "out", "threads", "mlp", "visibility"}
_VIS_KEYS = {"resolution", "dilation"}


class UsageError(TriportraitError):
    category = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    render: dict = field(default_factory=dict)
    rig: dict = field(default_factory=dict)
    scene: dict = field(default_factory=dict)
    loss_weights: dict = field(default_factory=dict)
    visibility: dict = field(default_factory=dict)
    metric: str = "psnr"
    reconstructor: str = "identity"
    seed: int = 0
    out: str | None = None
    threads: int = 1
    mlp: str | None = None

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid config JSON: {exc.msg}", exc.pos, str(path)) from exc
        if not isinstance(obj, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        _reject_unknown(obj, _TOP_KEYS, "config")
        for key, allowed in (("render", _RENDER_KEYS), ("rig", _RIG_KEYS),
                             ("scene", _SCENE_KEYS), ("visibility", _VIS_KEYS)):
            _reject_unknown(obj.get(key, {}), allowed, key)
        cfg = cls(**obj)
        base = path.parent
        if cfg.out is not None:
            cfg.out = str((base / cfg.out).resolve())
        if cfg.mlp is not None:
            cfg.mlp = str((base / cfg.mlp).resolve())
            if not Path(cfg.mlp).exists():
                raise UsageError(f"config references missing MLP file {cfg.mlp}")
        LossWeights.from_json(cfg.loss_weights)
        return cfg

    def render_config(self) -> RenderConfig:
        r = dict(self.render)
        if "background" in r:
            r["background"] = tuple(r["background"])
        return RenderConfig(**r)

    def make_rig(self) -> CameraRig:
        return make_rig(**{"n": self.rig.get("n_views", ev.DEFAULT_VIEWS),
                           **{k: v for k, v in self.rig.items() if k != "n_views"}})


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise UsageError(f"{where} must be a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise UsageError(f"unknown {where} keys: {sorted(unknown)}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _resolve(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out = args.out
    if cfg.threads < 1:
        raise UsageError("--threads must be >= 1")
    if cfg.seed < 0 or cfg.seed >= 2 ** 64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    if cfg.out is None:
        raise UsageError("an output directory is required (--out or config 'out')")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    return cfg


def _field_and_camera(args, cfg: RunConfig):
    if args.triplane:
        tp = read_triplane(args.triplane)
        mlp_path = args.mlp or cfg.mlp
        mlp = read_mlp(mlp_path) if mlp_path else random_mlp(cfg.seed, in_features=tp.channels)
        fld = TriplaneField(tp, mlp)
    else:
        scene = make_scene(cfg.seed, cfg.scene.get("n_blobs", 6), cfg.scene.get("n_frames", 1))
        fld = scene.frame(args.frame)
    if args.camera:
        cam = read_camera(args.camera)
    else:
        rig = cfg.make_rig()
        if not 0 <= args.view < rig.n_views:
            raise UsageError(f"--view must be in 0..{rig.n_views - 1}")
        cam = rig.cameras[args.view]
    return fld, cam


def _write_render(img, out: Path, stem: str = "render") -> list:
    paths = [out / f"{stem}.png", out / f"{stem}_feature.imgf",
             out / f"{stem}_depth.imgf", out / f"{stem}_alpha.imgf"]
    write_image(img.rgb, paths[0])
    write_raster(img.feature, paths[1])
    depth = np.where(img.alpha >= 0.5, img.depth, np.nan)
    write_raster(depth, paths[2])
    write_raster(img.alpha, paths[3])
    return [str(p) for p in paths]


def cmd_synth(args, cfg: RunConfig) -> dict:
    scene = make_scene(cfg.seed, cfg.scene.get("n_blobs", 6), cfg.scene.get("n_frames", 2))
    manifest = generate_dataset(scene, cfg.make_rig(), cfg.render_config(), cfg.out,
                                threads=cfg.threads)
    return {"manifest": str(Path(cfg.out) / "manifest.json"),
            "images": len(manifest["frames"]) + 1}


def cmd_render(args, cfg: RunConfig) -> dict:
    fld, cam = _field_and_camera(args, cfg)
    img = render(fld, cam, cfg.render_config(), threads=cfg.threads)
    return {"written": _write_render(img, Path(cfg.out))}


def cmd_shoulder(args, cfg: RunConfig) -> dict:
    fld, cam = _field_and_camera(args, cfg)
    warp = ShoulderWarp(args.theta, args.phi, strict_yaw=not args.conventional_yaw)
    img = render_with_shoulder(fld, cam, cfg.render_config(), warp, threads=cfg.threads)
    return {"written": _write_render(img, Path(cfg.out), "shoulder"), "warp": warp.to_json()}


def cmd_visibility(args, cfg: RunConfig) -> dict:
    fld, cam = _field_and_camera(args, cfg)
    rcfg = cfg.render_config()
    depth = _depth(fld, cam, rcfg, cfg.threads)
    res = cfg.visibility.get("resolution", 256)
    dil = cfg.visibility.get("dilation", 1)
    vis = rasterize_visibility(depth_to_points(depth, cam), res, dil)
    out = Path(cfg.out)
    written = [out / "visibility.imgf"]
    write_raster(vis.masks, written[0])
    if args.frontal_camera:
        front = read_camera(args.frontal_camera)
        vis_f = rasterize_visibility(depth_to_points(_depth(fld, front, rcfg, cfg.threads),
                                                     front), res, dil)
        written.append(out / "occlusion.imgf")
        write_raster(occlusion_mask(vis_f, vis).values, written[-1])
    return {"written": [str(p) for p in written],
            "visible_texels": [int(m.sum()) for m in vis.masks]}


def _depth(fld, cam, rcfg, threads):
    img = render(fld, cam, rcfg, threads=threads)
    return np.where(img.alpha >= 0.5, img.depth, np.nan)


def cmd_warp(args, cfg: RunConfig) -> dict:
    tp = read_triplane(args.triplane)
    if args.flow:
        flow = read_flow(args.flow)
    elif args.synthetic_flow is not None:
        flow = smooth_flow(cfg.seed, tp.resolution, args.synthetic_flow)
    else:
        raise UsageError("warp needs --flow or --synthetic-flow")
    out = Path(cfg.out) / "warped.trpl"
    write_triplane(warp_triplane(tp, flow), out)
    return {"written": [str(out)]}


def _read_vis(path):
    arr = read_raster(path)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise FormatError(f"expected a 3-plane raster, got shape {arr.shape}", 0, str(path))
    return arr.astype(np.float64)


def cmd_fuse(args, cfg: RunConfig) -> dict:
    fused = fuse_triplanes(read_triplane(args.undist), read_triplane(args.prior),
                           _read_vis(args.vis_undist), _read_vis(args.vis_prior),
                           radius=args.radius)
    out = Path(cfg.out) / "fused.trpl"
    write_triplane(fused, out)
    return {"written": [str(out)]}


def cmd_losses(args, cfg: RunConfig) -> dict:
    weights = LossWeights.load(args.weights) if args.weights else LossWeights.from_json(
        cfg.loss_weights)
    undist = read_triplane(args.undist)
    gt = read_triplane(args.gt)
    fused = read_triplane(args.fused) if args.fused else undist
    absent = []
    comps = {"undist": loss_undist(undist, gt)}
    vis_paths = (args.vis_raw, args.vis_raw_gt, args.vis_prior, args.vis_prior_gt)
    if all(vis_paths):
        comps["vis"] = loss_vis(*(_read_vis(p) for p in vis_paths))
    else:
        comps["vis"] = 0.0
        absent.append("vis")
    r = gt.resolution
    zeros = np.zeros((3, r, r))
    vis_gt = _read_vis(args.vis_gt) if args.vis_gt else zeros
    occ = _read_vis(args.occ) if args.occ else zeros
    comps["fusion"] = loss_fusion(fused, gt, vis_gt, occ)
    comps["render"] = args.render_value
    total = loss_total(comps, weights, args.render_value)
    report = {**comps, "total": total, "weights": weights.__dict__, "absent": absent}
    out = Path(cfg.out) / "losses.json"
    out.write_text(_dump(report))
    return report


def cmd_eval(args, cfg: RunConfig) -> dict:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    root = manifest_path.parent
    n, t_count = manifest["n_views"], manifest["n_frames"]
    scene_info = manifest.get("scene")
    rig_info = manifest.get("rig")
    if scene_info is None or rig_info is None:
        raise UsageError("manifest lacks the scene/rig description needed for reconstruction")
    scene = make_scene(scene_info["seed"], scene_info["n_blobs"], scene_info["n_frames"])
    rig = CameraRig.from_json(rig_info)
    gts = [[None] * n for _ in range(t_count)]
    paths = {}
    for entry in manifest["frames"]:
        p = root / entry["path"]
        gts[entry["t"]][entry["view"]] = read_image(p)
        paths[(entry["t"], entry["view"])] = p
    if any(g is None for frame in gts for g in frame):
        raise FormatError("manifest does not list every (frame, view)", 0, str(manifest_path))
    cameras = [read_camera(root / f"cameras/view{j}.json") for j in range(n)]
    rcfg = RenderConfig(**{k: (tuple(v) if k == "background" else v)
                           for k, v in manifest.get("render", {}).items()})
    spec = args.reconstructor or cfg.reconstructor
    mlp = read_mlp(cfg.mlp) if cfg.mlp else None
    recon = parse_reconstructor(spec, scene, rig, paths, seed=cfg.seed, mlp=mlp)
    metric = ev.get_metric(args.metric or cfg.metric)
    S = ev.build_score_tensor(recon, cameras, gts, metric, rcfg, threads=cfg.threads)
    out = Path(cfg.out)
    csv_path, mean_path = ev.export_scores(S, out / "scores.csv")
    ev.render_heatmap(S, out / "heatmap.png")
    report = {**ev.summarize(S), "reconstructor": spec}
    (out / "report.json").write_text(_dump(report))
    return report


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--out", help="output directory")

    source = _Parser(add_help=False)
    source.add_argument("--triplane", help="TRPL file; default is the seeded blob scene")
    source.add_argument("--mlp", help="MLPW decoder weights for --triplane")
    source.add_argument("--frame", type=int, default=0, help="scene frame")
    source.add_argument("--camera", help="camera JSON; default is a rig view")
    source.add_argument("--view", type=int, default=0, help="rig view when --camera is absent")

    p = _Parser(prog="triportrait", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("synth", parents=[common], help="generate a multi-view dataset")
    sub.add_parser("render", parents=[common, source], help="render one view")

    sp = sub.add_parser("shoulder", parents=[common, source], help="shoulder-warped render")
    sp.add_argument("--theta", type=float, required=True, help="roll at the shoulder base (rad)")
    sp.add_argument("--phi", type=float, default=0.0, help="yaw at the shoulder base (rad)")
    sp.add_argument("--conventional-yaw", action="store_true",
                    help="use an orthonormal yaw matrix")

    sp = sub.add_parser("visibility", parents=[common, source], help="visibility triplane")
    sp.add_argument("--frontal-camera", help="also emit the occlusion mask against this camera")

    sp = sub.add_parser("warp", parents=[common], help="flow-warp a triplane")
    sp.add_argument("--triplane", required=True)
    sp.add_argument("--flow", help="FLOW file")
    sp.add_argument("--synthetic-flow", type=float, metavar="AMPLITUDE",
                    help="seeded smooth flow with this peak displacement in texels")

    sp = sub.add_parser("fuse", parents=[common], help="visibility-gated fusion")
    sp.add_argument("--undist", required=True)
    sp.add_argument("--prior", required=True)
    sp.add_argument("--vis-undist", required=True)
    sp.add_argument("--vis-prior", required=True)
    sp.add_argument("--radius", type=int, default=0, help="box-blur radius for visibility")

    sp = sub.add_parser("losses", parents=[common], help="training loss values as JSON")
    sp.add_argument("--undist", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--fused")
    for name in ("vis-raw", "vis-raw-gt", "vis-prior", "vis-prior-gt", "vis-gt", "occ"):
        sp.add_argument(f"--{name}")
    sp.add_argument("--render-value", type=float, default=0.0,
                    help="image-space loss supplied by an external metric")
    sp.add_argument("--weights", help="loss weight JSON")

    sp = sub.add_parser("eval", parents=[common], help="score-matrix evaluation")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--reconstructor", help="identity | perturb:<sigma> | external:<cmd>")
    sp.add_argument("--metric", help="psnr | l1 | external:<cmd>")
    return p


COMMANDS = {
    "synth": cmd_synth, "render": cmd_render, "shoulder": cmd_shoulder,
    "visibility": cmd_visibility, "warp": cmd_warp, "fuse": cmd_fuse,
    "losses": cmd_losses, "eval": cmd_eval,
}


def _fail(category: str, message: str) -> int:
    code = {"usage": EXIT_USAGE, "numerical": EXIT_NUMERICAL}.get(category, EXIT_DATA)
    sys.stderr.write(json.dumps({"error": category, "message": message, "exit": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve(args)
        result = COMMANDS[args.command](args, cfg)
    except TriportraitError as exc:
        return _fail(exc.category, str(exc))
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail("data", str(exc))
    except (KeyError, TypeError, ValueError) as exc:
        return _fail("data", f"{type(exc).__name__}: {exc}")
    except (ArithmeticError, FloatingPointError) as exc:
        return _fail("numerical", str(exc))
    sys.stdout.write(_dump(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
