"""Time the numba kernels against their numpy fallbacks.

Runs the kernel micro-benchmarks in-process for both backends, then times
the full pipeline on a 30 s click track once per backend in a child
process (the pipeline picks its backend at import time from
OBTAIN_DISABLE_NUMBA).

    python benchmarks/bench_backends.py [--repeat N] [--seconds S]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from obtain import _accel

PIPELINE_SNIPPET = """
import json, time
from obtain import BACKEND
from obtain.pipeline import Pipeline
from obtain.synth import click_track
y, _ = click_track(120, {seconds})
Pipeline()
best = float("inf")
for _ in range({repeat}):
    pipe = Pipeline()
    t0 = time.perf_counter()
    pipe.process(y)
    best = min(best, time.perf_counter() - t0)
print(json.dumps({{"backend": BACKEND, "sec": best, "p99_ms": pipe.latency.percentile(99) * 1e3}}))
"""


def kernel_cases(rng):
    x = rng.normal(size=512)
    r = rng.random((255, 512))
    seg = rng.random(689)
    w = rng.random(689)
    mag = rng.random(513)
    prev = rng.random(513)
    out = np.empty(513)
    buf = rng.random(1024)
    periods = np.arange(98, 414, 31)
    return {
        "lms_scan(512)": lambda k: k["lms_scan"](x, r, True),
        "weighted_max(689)": lambda k: k["weighted_max"](seg, w),
        "compress_flux(513)": lambda k: k["compress_flux"](mag, 1.0, 2e-4, 100.0, prev, out),
        "pulse_stats(1024, 11)": lambda k: k["pulse_stats"](buf, periods, 4),
    }


def kernels(name):
    return {k: getattr(_accel, f"{k}_{name}")
            for k in ("lms_scan", "weighted_max", "compress_flux", "pulse_stats")}


def bench_kernels(repeat):
    names = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    _accel.warmup()
    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':<24}" + "".join(f"{n + ' us':>14}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = []
        for name in names:
            k = kernels(name)
            n = 200
            t = min(timeit.repeat(lambda: fn(k), number=n, repeat=repeat)) / n
            times.append(t * 1e6)
        speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else ""
        print(f"{label:<24}" + "".join(f"{t:>14.2f}" for t in times) + speed)


def bench_pipeline(repeat, seconds):
    code = PIPELINE_SNIPPET.format(repeat=repeat, seconds=seconds)
    print(f"\npipeline on {seconds:.0f} s of audio (best of {repeat})")
    for flag in ("1", "0"):
        env = dict(os.environ, OBTAIN_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                             capture_output=True, text=True).stdout
        res = json.loads(out)
        print(f"  {res['backend']:<6} {res['sec']:7.3f} s  {seconds / res['sec']:6.1f}x real time  "
              f"p99 hop {res['p99_ms']:.3f} ms")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seconds", type=float, default=30.0)
    ap.add_argument("--skip-pipeline", action="store_true")
    args = ap.parse_args(argv)
    bench_kernels(args.repeat)
    if not args.skip_pipeline:
        bench_pipeline(args.repeat, args.seconds)


if __name__ == "__main__":
    main()
