"""Timing comparison between the compiled and numpy kernel backends.

Micro-benchmarks time the dense forward/backward kernels on layer shapes
the engine actually runs, after checking that both backends produce the
same numbers. The optional end-to-end mode times a small seeded
meta-training run per backend in subprocesses, because the backend choice
is fixed at import time and cannot be switched inside one process.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --repeats 500 --end-to-end
"""
import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from ctxnas.numkit import _pykernels

try:
    from ctxnas.numkit import _ckernels
except ImportError:
    _ckernels = None

# label, layer dims, batch, activation
CASES = (
    ("controller step", (33, 64, 64, 31), 1, _pykernels.ACT_TANH),
    ("controller update", (33, 64, 64, 31), 150, _pykernels.ACT_TANH),
    ("encoder fusion in", (31, 64, 64, 20), 25, _pykernels.ACT_TANH),
    ("evaluator batch", (40, 64, 64, 1), 410, _pykernels.ACT_RELU),
)

END_TO_END = """\
import time
from ctxnas.config import build_engine, default_config
from ctxnas.numkit import BACKEND

cfg = default_config()
cfg["oracle"]["family_seed"] = 3
cfg["search"].update(n_meta=4, n_search_meta=10, candidates=8)
start = time.perf_counter()
build_engine(cfg, seed=1, phase="meta").meta_train()
print(f"{BACKEND} {time.perf_counter() - start:.3f}")
"""


def make_net(dims, batch, rng):
    weights = [rng.standard_normal((a, b)) / np.sqrt(a)
               for a, b in zip(dims, dims[1:])]
    biases = [rng.standard_normal(b) * 0.1 for b in dims[1:]]
    x = rng.standard_normal((batch, dims[0]))
    grad_out = rng.standard_normal((batch, dims[-1]))
    return weights, biases, x, grad_out


def check_agreement(mod_a, mod_b, act, net):
    weights, biases, x, grad_out = net
    out_a, cache_a = mod_a.forward(weights, biases, act, x)
    out_b, cache_b = mod_b.forward(weights, biases, act, x)
    worst = np.abs(out_a - out_b).max()
    dws_a, dbs_a, dx_a = mod_a.backward(weights, act, cache_a, grad_out)
    dws_b, dbs_b, dx_b = mod_b.backward(weights, act, cache_b, grad_out)
    for ga, gb in zip([*dws_a, *dbs_a, dx_a], [*dws_b, *dbs_b, dx_b]):
        worst = max(worst, np.abs(ga - gb).max())
    return float(worst)


def time_us(fn, repeats):
    fn()  # warm up
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples) * 1e6


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    print(f"{'case':<20} {'batch':>5} {'python us':>10} {'cython us':>10} "
          f"{'speedup':>8} {'max diff':>9}")
    for label, dims, batch, act in CASES:
        net = make_net(dims, batch, rng)
        weights, biases, x, grad_out = net
        diff = check_agreement(_pykernels, _ckernels, act, net)

        def roundtrip(mod):
            out, cache = mod.forward(weights, biases, act, x)
            mod.backward(weights, act, cache, grad_out)

        t_py = time_us(lambda: roundtrip(_pykernels), repeats)
        t_cy = time_us(lambda: roundtrip(_ckernels), repeats)
        print(f"{label:<20} {batch:>5} {t_py:>10.1f} {t_cy:>10.1f} "
              f"{t_py / t_cy:>7.2f}x {diff:>9.1e}")


def bench_end_to_end():
    print("\nseeded meta-training run (subprocess per backend, best of 3):")
    for backend in ("python", "cython"):
        env = dict(os.environ, CTXNAS_BACKEND=backend)
        best = None
        for _ in range(3):
            out = subprocess.run([sys.executable, "-c", END_TO_END], env=env,
                                 capture_output=True, text=True, check=True)
            name, seconds = out.stdout.split()
            best = float(seconds) if best is None else min(best, float(seconds))
        print(f"  {name:<8} {best:.3f}s")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200,
                        help="timing repetitions per case (median reported)")
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time a small meta-training run per backend")
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled backend not built; nothing to compare")
        return 1
    bench_kernels(args.repeats)
    if args.end_to_end:
        bench_end_to_end()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
