"""Compare the compiled and numpy ray-march backends, and thread scaling.

    python benchmarks/bench_render.py [--size 128] [--samples 64] [--threads 1 2 4 8]

Prints one line per (backend, threads) with the best-of-N wall time, and
optionally writes the table as JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import time

from triportrait import kernels
from triportrait.camera import look_at
from triportrait.fields import TriplaneField
from triportrait.render import RenderConfig, render
from triportrait.synth import make_scene
from triportrait.triplane import procedural_triplane, random_mlp


def best_time(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--resolution", type=int, default=256, help="triplane resolution")
    p.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4, 8])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--json", help="write results here")
    args = p.parse_args(argv)

    cam = look_at((0.0, 0.0, 2.7))
    cfg = RenderConfig(width=args.size, height=args.size, n_samples=args.samples)
    fields = {
        "triplane": TriplaneField(procedural_triplane(1, 32, args.resolution), random_mlp(2)),
        "blobs": make_scene(3).frame(0),
    }
    cpus = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    print(f"{args.size}x{args.size}, {args.samples} samples/ray, {cpus} CPU(s) available")
    print(f"{'field':<9} {'backend':<8} {'threads':>7} {'seconds':>9} {'vs python':>10} {'scaling':>8}")

    rows = []
    for name, fld in fields.items():
        render(fld, cam, cfg.with_(width=8, height=8))  # warm lazy caches
        python_t1 = best_time(lambda: render(fld, cam, cfg, backend="python"), args.reps)
        for backend in kernels.available():
            single = None
            for threads in args.threads:
                if backend == "python" and threads == 1:
                    t = python_t1
                else:
                    t = best_time(lambda: render(fld, cam, cfg, threads=threads, backend=backend),
                                  args.reps)
                single = single or t
                row = {"field": name, "backend": backend, "threads": threads, "seconds": t,
                       "speedup_vs_python": python_t1 / t, "thread_scaling": single / t}
                rows.append(row)
                print(f"{name:<9} {backend:<8} {threads:>7} {t:>9.3f} "
                      f"{row['speedup_vs_python']:>9.1f}x {row['thread_scaling']:>7.2f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"cpus": cpus, "size": args.size, "samples": args.samples, "rows": rows},
                      fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
