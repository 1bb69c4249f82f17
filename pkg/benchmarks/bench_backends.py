"""Compare the numpy and numba kernel backends.

Times a handful of hot kernels and one full scapegoat optimization on each
backend, after a warmup pass that absorbs JIT compilation.  Run from the
repository root:

    python3 benchmarks/bench_backends.py [--repeats N] [--seed S]
"""

import argparse
import time

import numpy as np

from scapegoat import backend
from scapegoat.optimize import PgdConfig, optimize_scapegoat
from scapegoat.world import WorldConfig, build_world, rng_stream, sample_latent


def _time(fn, repeats):
    fn()  # warmup: first numba call compiles (cached) machine code
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _kernel_cases(rng):
    w = rng.normal(size=(256, 128)).astype(np.float32)
    x = rng.normal(size=128).astype(np.float32)
    y = rng.normal(size=256).astype(np.float32)
    a = rng.normal(size=(128, 64)).astype(np.float32)
    b = rng.normal(size=(64, 128)).astype(np.float32)
    v = rng.normal(size=4096).astype(np.float32)
    g = rng.normal(size=4096).astype(np.float32)
    lo = np.full(4096, -0.05, dtype=np.float32)
    hi = np.full(4096, 0.05, dtype=np.float32)
    return [
        ("matvec 256x128", lambda k: k.matvec(w, x)),
        ("matvec_t 256x128", lambda k: k.matvec_t(w, y)),
        ("matmul 128x64x128", lambda k: k.matmul(a, b)),
        ("affine 256x128", lambda k: k.affine(w, x, y)),
        ("tanh_fwd 4096", lambda k: k.tanh_fwd(v)),
        ("sumsq 4096", lambda k: k.sumsq(v)),
        ("pgd_step 4096", lambda k: k.pgd_step(v, g, np.float32(0.01), lo, hi)),
    ]


def _optimize_case(world, seed):
    rng = rng_stream(seed, 0)
    origin = sample_latent(world, rng)
    targets = [sample_latent(world, rng) for _ in range(3)]
    cfg = PgdConfig(eps=0.05, step=0.01, iters=100)

    def run():
        optimize_scapegoat(world, origin, targets, cfg)

    return run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    cases = _kernel_cases(rng)

    results = {}
    for name in ("numpy", "numba"):
        backend.use(name)
        k = backend.kernels
        results[name] = [_time(lambda fn=fn: fn(k), args.repeats * 20)
                         for _, fn in cases]

    print(f"{'kernel':<22} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for (label, _), t_np, t_nb in zip(cases, results["numpy"], results["numba"]):
        print(f"{label:<22} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{t_np / t_nb:>8.2f}x")

    world = build_world(WorldConfig(seed=args.seed))
    print()
    times = {}
    for name in ("numpy", "numba"):
        backend.use(name)
        times[name] = _time(_optimize_case(world, args.seed), args.repeats)
        print(f"optimize_scapegoat [{name:<5}] {times[name] * 1e3:9.1f}ms "
              f"(3 targets, eps 0.05, 100 iters)")
    print(f"end-to-end speedup {times['numpy'] / times['numba']:.2f}x")


if __name__ == "__main__":
    main()
