"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Lines are printed as each criterion finishes and repeated in the terminal
summary.  Run alone with ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from triportrait.augment import ShoulderWarp, render_with_shoulder
from triportrait.camera import look_at
from triportrait.cli import main as cli_main
from triportrait.evaluation import (PSNR_CAP, ScoreTensor, input_view_variation,
                                    novel_view_variation, nvs_quality, overall_quality)
from triportrait.fields import AnalyticBlobField, Blob, ConstantSlab, TriplaneField
from triportrait.fusion import (FlowField, LossWeights, fuse_triplanes, loss_fusion,
                                loss_total, loss_undist, loss_vis, warp_triplane)
from triportrait.images import write_raster
from triportrait.render import RenderConfig, render, render_depth
from triportrait.triplane import (Triplane, procedural_triplane, random_mlp, sample_triplane,
                                  write_mlp, write_triplane)
from triportrait.visibility import VisibilityTriplane, occlusion_mask, visibility_for

RESULTS: list[str] = []


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. Transmittance oracle


def test_criterion_1_transmittance():
    start = time.perf_counter()
    sigma0, length = 8.0, 0.5
    exact = 1.0 - math.exp(-sigma0 * length)
    # On-axis ray through a slab occupying the middle third of [t_near, t_far].
    slab = ConstantSlab((-1.0, -1.0, -0.25), (1.0, 1.0, 0.25), sigma0)
    cam = look_at((0.0, 0.0, 2.7))
    errors = {}
    for n in (32, 64, 128, 256, 512):
        cfg = RenderConfig(width=1, height=1, n_samples=n, t_near=1.95, t_far=3.45)
        errors[n] = abs(float(render(slab, cam, cfg).alpha[0, 0]) - exact)
    ratios = [errors[2 * n] / errors[n] for n in (32, 64, 128, 256)]
    elapsed = time.perf_counter() - start
    ok = errors[256] <= 1e-3 and max(ratios) <= 0.6 and elapsed < 10.0
    report(1, ok, f"|alpha-exact| at N=256 = {errors[256]:.2e} (<=1e-3); "
                  f"worst error ratio per doubling = {max(ratios):.3f} (<=0.6); {elapsed:.2f}s (<10s)")


# ---------------------------------------------------------------------------
# 2. Sampling / warping / loss / aggregate oracles


def test_criterion_2_oracles():
    start = time.perf_counter()
    n_inst = 100
    worst = {k: 0.0 for k in ("sample", "warp", "occlusion", "losses", "aggregates")}
    for seed in range(n_inst):
        rng = np.random.default_rng([2, seed])
        planes = rng.normal(size=(3, 3, 7, 7))
        tp = Triplane(planes)
        for _ in range(5):
            x = rng.uniform(-0.7, 0.7, size=3)
            got = sample_triplane(tp, x)
            worst["sample"] = max(worst["sample"], float(np.max(np.abs(
                got - oracles.sample_triplane(tp.planes, x)))))

        flow = FlowField(rng.normal(0.0, 2.0, size=(3, 2, 7, 7)))
        got = warp_triplane(tp, flow).planes
        worst["warp"] = max(worst["warp"], float(np.max(np.abs(
            got - oracles.warp_triplane(tp.planes, flow.flow)))))

        front = rng.integers(0, 2, size=(3, 7, 7)).astype(np.uint8)
        inp = rng.integers(0, 2, size=(3, 7, 7)).astype(np.uint8)
        occ = occlusion_mask(VisibilityTriplane(front), VisibilityTriplane(inp)).values
        worst["occlusion"] = max(worst["occlusion"], float(np.max(np.abs(
            occ - oracles.occlusion(front, inp)))))

        gt = Triplane(rng.normal(size=(3, 3, 7, 7)))
        masks = [rng.integers(0, 2, size=(3, 7, 7)).astype(np.float64) for _ in range(4)]
        occ_f = np.clip(masks[0] - masks[1], 0, 1)
        weights = LossWeights(*rng.uniform(0, 2, size=4))
        comps = {"undist": loss_undist(tp, gt), "vis": loss_vis(*masks),
                 "fusion": loss_fusion(tp, gt, masks[2], occ_f)}
        render_value = float(rng.uniform(0, 1))
        expect = {"undist": oracles.mean_abs(tp.planes, gt.planes),
                  "vis": oracles.loss_vis(*masks),
                  "fusion": oracles.loss_fusion(tp.planes, gt.planes, masks[2], occ_f)}
        total = (weights.w_undist * expect["undist"] + weights.w_vis * expect["vis"]
                 + weights.w_fusion * expect["fusion"] + weights.w_render * render_value)
        diffs = [abs(comps[k] - expect[k]) for k in expect]
        diffs.append(abs(loss_total(comps, weights, render_value) - total))
        worst["losses"] = max(worst["losses"], max(diffs))

        s = rng.normal(25.0, 3.0, size=(int(rng.integers(1, 4)), 5, 5))
        s[rng.random(s.shape) < 0.1] = np.nan
        S = ScoreTensor(s)
        got = (overall_quality(S), nvs_quality(S), novel_view_variation(S),
               input_view_variation(S))
        worst["aggregates"] = max(worst["aggregates"], float(np.max(np.abs(
            np.subtract(got, oracles.aggregates(s))))))
    elapsed = time.perf_counter() - start
    tol = {"sample": 1e-6, "warp": 1e-6, "occlusion": 1e-9, "losses": 1e-9, "aggregates": 1e-9}
    ok = all(worst[k] <= tol[k] for k in worst) and elapsed < 60.0
    detail = ", ".join(f"{k} {worst[k]:.1e}<={tol[k]:.0e}" for k in worst)
    report(2, ok, f"{n_inst} instances each: {detail}; {elapsed:.1f}s (<60s)")


# ---------------------------------------------------------------------------
# 3. Shoulder warp properties


def test_criterion_3_shoulder():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.0, 1.0, size=(2000, 3))
    identity = np.array_equal(ShoulderWarp(0.0, 0.0).apply(pts), pts)

    w = ShoulderWarp(theta_base=0.3)
    y = w.y_chin - 1e-6
    near = rng.uniform(-0.5, 0.5, size=(500, 3))
    near[:, 1] = y
    cont = float(np.max(np.linalg.norm(w.apply(near) - near, axis=1)))

    theta_at_base = float(w.angles_at(w.y_base)[0])

    head = AnalyticBlobField((Blob((0.0, 0.4, 0.0), (0.04, 0.04, 0.04), 40.0, (0.9, 0.3, 0.2)),))
    cam = look_at((0.0, 0.0, 2.7))
    cfg = RenderConfig(width=64, height=64, n_samples=64)
    base = render(head, cam, cfg)
    warped = render_with_shoulder(head, cam, cfg, ShoulderWarp(0.3, 0.2))
    head_diff = float(np.max(np.abs(warped.rgb - base.rgb)))

    ok = identity and cont <= 1e-6 and theta_at_base == 0.3 and head_diff <= 1e-6
    report(3, ok, f"identity bit-exact={identity}; continuity {cont:.2e} (<=1e-6); "
                  f"theta(y_base)={theta_at_base!r} (==0.3); head render diff {head_diff:.2e} (<=1e-6)")


# ---------------------------------------------------------------------------
# 4. Visibility pipeline


def test_criterion_4_visibility():
    res = 256
    scale, peak = 0.15, 50.0
    blob = AnalyticBlobField((Blob((0.0, 0.0, 0.0), (scale,) * 3, peak, (0.8, 0.8, 0.8)),))
    # Distant long-focal camera: rays are nearly parallel to z, so the xy
    # footprint of lifted surface points is the alpha >= 0.5 silhouette.
    dist = 30.0
    cam = look_at((0.0, 0.0, dist), focal=dist)
    cfg = RenderConfig(width=512, height=512, n_samples=96, t_near=dist - 0.6, t_far=dist + 0.6)
    vis = visibility_for(blob, cam, res, cfg, dilation=0)
    # Analytic silhouette: optical depth through the Gaussian equals ln 2.
    tau0 = peak * scale * math.sqrt(2.0 * math.pi)
    rho = scale * math.sqrt(2.0 * math.log(tau0 / math.log(2.0)))
    g = np.arange(res) / (res - 1) - 0.5
    xx, yy = np.meshgrid(g, g)  # [row=y, col=x]
    disk = xx ** 2 + yy ** 2 <= rho ** 2
    m = vis.masks[0].astype(bool)
    iou = float((m & disk).sum() / (m | disk).sum())

    side = look_at((2.7 * math.sin(1.0), 0.0, 2.7 * math.cos(1.0)))
    small = RenderConfig(width=96, height=96, n_samples=64)
    v_front = visibility_for(blob, look_at((0.0, 0.0, 2.7)), res, small)
    v_side = visibility_for(blob, side, res, small)
    occ = occlusion_mask(v_front, v_side)
    binary = all(set(np.unique(v.masks)) <= {0, 1} for v in (vis, v_front, v_side))
    overlap = int(np.sum((occ.values > 0) & (v_side.masks == 1)))
    ok = iou >= 0.98 and binary and overlap == 0 and occ.values.sum() > 0
    report(4, ok, f"silhouette IoU {iou:.4f} (>=0.98) vs analytic disk r={rho:.4f}; "
                  f"binary={binary}; occlusion&visibility texels={overlap} (==0)")


# ---------------------------------------------------------------------------
# 5. Fusion contract


def test_criterion_5_fusion():
    tu = procedural_triplane(51, channels=8, resolution=32)
    tp = procedural_triplane(52, channels=8, resolution=32)
    ones, zeros = np.ones((3, 32, 32)), np.zeros((3, 32, 32))
    d_undist = float(np.max(np.abs(fuse_triplanes(tu, tp, ones, ones).planes - tu.planes)))
    d_prior = float(np.max(np.abs(fuse_triplanes(tu, tp, zeros, ones).planes - tp.planes)))
    a = Triplane(np.zeros((3, 4, 8, 8)))
    b = Triplane(np.ones((3, 4, 8, 8)))
    weighted = loss_fusion(a, b, np.ones((3, 8, 8)), np.zeros((3, 8, 8)))
    ok = d_undist <= 1e-6 and d_prior <= 1e-6 and weighted == 2.0
    report(5, ok, f"vis=1 -> undistorted diff {d_undist:.1e}; vis_in=0,vis_prior=1 -> prior "
                  f"diff {d_prior:.1e} (<=1e-6); weighted loss {weighted!r} (==2.0)")


# ---------------------------------------------------------------------------
# 6. Evaluation protocol end-to-end


def test_criterion_6_evaluation(tmp_path, capsys):
    start = time.perf_counter()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rig": {"n_views": 8}, "scene": {"n_frames": 3}}))
    assert cli_main(["synth", "--config", str(cfg), "--seed", "7",
                     "--out", str(tmp_path / "ds")]) == 0
    reports = {}
    for spec in ("identity", "perturb:0.05"):
        out = tmp_path / spec.replace(":", "_")
        assert cli_main(["eval", "--config", str(cfg), "--manifest", str(tmp_path / "ds/manifest.json"),
                         "--reconstructor", spec, "--out", str(out)]) == 0
        reports[spec] = json.loads((out / "report.json").read_text())
    capsys.readouterr()
    elapsed = time.perf_counter() - start
    ident, pert = reports["identity"], reports["perturb:0.05"]
    ok = (ident["overall"] == PSNR_CAP and ident["nvv"] == 0.0 and ident["ivv"] == 0.0
          and pert["nvv"] > 0 and pert["ivv"] > 0 and pert["nvs"] < pert["overall"]
          and elapsed < 300)
    report(6, ok, f"identity overall={ident['overall']} nvv={ident['nvv']} ivv={ident['ivv']}; "
                  f"perturb overall={pert['overall']:.3f} nvs={pert['nvs']:.3f} "
                  f"nvv={pert['nvv']:.3f} ivv={pert['ivv']:.3f}; {elapsed:.1f}s (<300s)")


# ---------------------------------------------------------------------------
# 7. Determinism across reruns and thread counts


def _digest(folder: Path) -> dict:
    return {str(p.relative_to(folder)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(folder.rglob("*")) if p.is_file()}


def test_criterion_7_determinism(tmp_path, capsys):
    inputs = tmp_path / "inputs"
    inputs.mkdir()
    cfg = inputs / "cfg.json"
    cfg.write_text(json.dumps({"render": {"width": 40, "height": 36, "n_samples": 32,
                                          "jitter": True, "jitter_seed": 5},
                               "rig": {"n_views": 3}, "scene": {"n_blobs": 4, "n_frames": 2},
                               "visibility": {"resolution": 64}}))
    write_triplane(procedural_triplane(71, channels=32, resolution=32), inputs / "a.trpl")
    write_triplane(procedural_triplane(72, channels=32, resolution=32), inputs / "b.trpl")
    write_mlp(random_mlp(73), inputs / "m.mlpw")
    rng = np.random.default_rng(74)
    write_raster(rng.integers(0, 2, size=(3, 32, 32)), inputs / "vu.imgf")
    write_raster(rng.integers(0, 2, size=(3, 32, 32)), inputs / "vp.imgf")
    assert cli_main(["synth", "--config", str(cfg), "--out", str(inputs / "ds")]) == 0
    capsys.readouterr()
    i = str(inputs)
    commands = {
        "synth": ["synth", "--config", f"{i}/cfg.json"],
        "render": ["render", "--config", f"{i}/cfg.json", "--triplane", f"{i}/a.trpl",
                   "--mlp", f"{i}/m.mlpw"],
        "shoulder": ["shoulder", "--config", f"{i}/cfg.json", "--theta", "0.3", "--phi", "0.2"],
        "visibility": ["visibility", "--config", f"{i}/cfg.json", "--view", "2",
                       "--frontal-camera", f"{i}/ds/cameras/view0.json"],
        "warp": ["warp", "--triplane", f"{i}/a.trpl", "--synthetic-flow", "1.5"],
        "fuse": ["fuse", "--undist", f"{i}/a.trpl", "--prior", f"{i}/b.trpl",
                 "--vis-undist", f"{i}/vu.imgf", "--vis-prior", f"{i}/vp.imgf", "--radius", "1"],
        "losses": ["losses", "--undist", f"{i}/a.trpl", "--gt", f"{i}/b.trpl",
                   "--vis-gt", f"{i}/vu.imgf", "--render-value", "0.25"],
        "eval": ["eval", "--config", f"{i}/cfg.json", "--manifest", f"{i}/ds/manifest.json",
                 "--reconstructor", "perturb:0.05"],
    }
    mismatched = []
    for name, argv in commands.items():
        digests = []
        for run, threads in enumerate((1, 1, 4, 8)):
            out = tmp_path / f"{name}_{run}"
            code = cli_main([*argv, "--seed", "9", "--threads", str(threads), "--out", str(out)])
            stdout = capsys.readouterr().out.replace(str(out), "<out>")
            digests.append((code, stdout, _digest(out)))
        if any(d != digests[0] for d in digests) or digests[0][0] != 0:
            mismatched.append(name)
    ok = not mismatched
    report(7, ok, f"{len(commands)} commands x (rerun, threads 1/4/8) bit-identical; "
                  f"mismatched={mismatched}")


# ---------------------------------------------------------------------------
# 8. Performance


def test_criterion_8_performance():
    tp = procedural_triplane(81, channels=32, resolution=256)
    fld = TriplaneField(tp, random_mlp(82))
    cam = look_at((0.0, 0.0, 2.7))
    cfg = RenderConfig(width=128, height=128, n_samples=64)
    render(fld, cam, cfg.with_(width=8, height=8))  # build lazy caches

    def best(threads, reps=3):
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            render(fld, cam, cfg, threads=threads)
            times.append(time.perf_counter() - t0)
        return min(times)

    t1 = best(1)
    t8 = best(8)
    speedup = t1 / t8
    cpus = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    ok = t1 <= 2.0 and speedup >= 5.0
    report(8, ok, f"single-thread {t1:.3f}s (<=2s); 8-thread {t8:.3f}s, speedup {speedup:.2f}x "
                  f"(>=5x) on {cpus} available CPU(s)")


def test_depth_sanity_for_opaque_slab():
    # Companion check for criterion 1: opaque slab depth error is half a bin.
    slab = ConstantSlab((-1.0, -1.0, -1.0), (1.0, 1.0, 0.0), 1e4)
    cam = look_at((0.0, 0.0, 2.7))
    errs = []
    for n in (36, 72, 144):
        d = render_depth(slab, cam, RenderConfig(width=1, height=1, n_samples=n))
        errs.append(abs(float(d[0, 0]) - 2.7))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=1e-6)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=1e-6)
