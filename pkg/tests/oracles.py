"""Brute-force reference implementations used by the tests.

Everything here is written with explicit Python loops and scalar math so it
shares no vectorised code path with the package.
"""

from __future__ import annotations

import math

import numpy as np

AXES = ((0, 1), (0, 2), (1, 2))


def _bilinear_scalar(plane, ch, col, row):
    """Bilinear value of ``plane[ch]`` at a clamped continuous (col, row)."""
    h, w = len(plane[ch]), len(plane[ch][0])
    col = min(max(col, 0.0), w - 1.0)
    row = min(max(row, 0.0), h - 1.0)
    c0 = int(math.floor(col))
    r0 = int(math.floor(row))
    if c0 == w - 1:
        c0 = w - 2
    if r0 == h - 1:
        r0 = h - 2
    fc = col - c0
    fr = row - r0
    acc = 0.0
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            acc += wr * wc * float(plane[ch][r0 + dr][c0 + dc])
    return acc


def sample_triplane(planes, x):
    planes = np.asarray(planes, dtype=np.float64)
    _, c, r, _ = planes.shape
    out = []
    for ch in range(c):
        total = 0.0
        for k, (ca, ra) in enumerate(AXES):
            col = (x[ca] + 0.5) * (r - 1)
            row = (x[ra] + 0.5) * (r - 1)
            total += _bilinear_scalar(planes[k], ch, col, row)
        out.append(total / 3.0)
    return np.array(out)


def warp_triplane(planes, flow):
    planes = np.asarray(planes, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    _, c, r, _ = planes.shape
    out = np.zeros_like(planes)
    for k in range(3):
        for row in range(r):
            for col in range(r):
                sc = col + flow[k, 0, row, col]
                sr = row + flow[k, 1, row, col]
                for ch in range(c):
                    out[k, ch, row, col] = _bilinear_scalar(planes[k], ch, sc, sr)
    return out


def occlusion(front, inp):
    out = np.zeros(np.shape(front))
    for idx in np.ndindex(*np.shape(front)):
        out[idx] = 1.0 if (front[idx] == 1 and inp[idx] == 0) else 0.0
    return out


def mean_abs(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    total = 0.0
    for u, v in zip(a, b):
        total += abs(u - v)
    return total / len(a)


def loss_vis(raw, raw_gt, prior, prior_gt):
    return mean_abs(raw, raw_gt) + mean_abs(prior, prior_gt)


def loss_fusion(fused, gt, vis, occ):
    fused = np.asarray(fused, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _, c, r, _ = fused.shape
    total = 0.0
    for k in range(3):
        for ch in range(c):
            for row in range(r):
                for col in range(r):
                    wgt = 1.0 + vis[k][row][col] + occ[k][row][col]
                    total += abs(fused[k, ch, row, col] - gt[k, ch, row, col]) * wgt
    return total / (3 * c * r * r)


def fuse(tu, tp, vu, vp):
    tu = np.asarray(tu, dtype=np.float64)
    tp = np.asarray(tp, dtype=np.float64)
    out = np.zeros_like(tu)
    for k, ch, row, col in np.ndindex(*tu.shape):
        w = vu[k][row][col]
        p = vp[k][row][col]
        inner = p * tp[k, ch, row, col] + (1.0 - p) * tu[k, ch, row, col]
        out[k, ch, row, col] = w * tu[k, ch, row, col] + (1.0 - w) * inner
    return out


def _sample_std(xs):
    m = sum(xs) / len(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def aggregates(S):
    """(overall, nvs, nvv, ivv) with NaN entries skipped."""
    t_count, n, _ = S.shape
    allv, off = [], []
    for t in range(t_count):
        for i in range(n):
            for j in range(n):
                v = S[t, i, j]
                if math.isnan(v):
                    continue
                allv.append(v)
                if i != j:
                    off.append(v)
    nvv, ivv = [], []
    for t in range(t_count):
        for i in range(n):
            row = [S[t, i, j] for j in range(n) if j != i and not math.isnan(S[t, i, j])]
            if len(row) >= 2:
                nvv.append(_sample_std(row))
        for j in range(n):
            col = [S[t, i, j] for i in range(n) if i != j and not math.isnan(S[t, i, j])]
            if len(col) >= 2:
                ivv.append(_sample_std(col))
    return (sum(allv) / len(allv), sum(off) / len(off),
            sum(nvv) / len(nvv), sum(ivv) / len(ivv))


def composite_ray(sigmas, colors, ts, delta, bg):
    """One ray: returns (rgb, alpha, depth) by explicit accumulation."""
    trans = 1.0
    rgb = [0.0, 0.0, 0.0]
    alpha = 0.0
    dsum = 0.0
    for s, c, t in zip(sigmas, colors, ts):
        a = 1.0 - math.exp(-s * delta)
        w = trans * a
        for k in range(3):
            rgb[k] += w * c[k]
        alpha += w
        dsum += w * t
        trans *= 1.0 - a
    for k in range(3):
        rgb[k] += trans * bg[k]
    return rgb, alpha, dsum / max(alpha, 1e-8)


def mlp_forward(layers, f):
    """Decode one feature vector with scalar loops."""
    h = [float(v) for v in f]
    for li, (W, b) in enumerate(layers):
        W = np.asarray(W, dtype=np.float64)
        nxt = []
        for o in range(W.shape[0]):
            acc = float(b[o])
            for i in range(W.shape[1]):
                acc += W[o, i] * h[i]
            if li < len(layers) - 1:
                acc = acc if acc > 0 else 0.01 * acc
            nxt.append(acc)
        h = nxt
    sigma = math.log1p(math.exp(-abs(h[0]))) + max(h[0], 0.0)
    rgb = [1.0 / (1.0 + math.exp(-v)) for v in h[1:4]]
    return sigma, rgb, h[4:]
