"""Compare the numba kernels against the pure-numpy fallback.

Times each elementwise/rowwise kernel on training-sized arrays, then a
short pendulum training slice under each backend. Run from the repo root:

    python3 benchmarks/bench_backends.py [--updates 300]

The numbers answer one question: what does SAVGO_BACKEND=numpy cost?
"""

import argparse
import time

import numpy as np

from savgo import accel
from savgo.config import ExperimentConfig
from savgo.trainer import train


def median_time(fn, repeats: int = 200) -> float:
    fn()  # warm the JIT cache before the clock starts
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def kernel_cases(rng):
    act = rng.normal(size=(8192, 64))
    act_g = rng.normal(size=(8192, 64))
    sims = rng.normal(size=(64, 128))
    sims_g = rng.normal(size=(64, 128))
    flat = rng.normal(size=50_000)
    flat_g = rng.normal(size=50_000)
    m, v = np.zeros_like(flat), np.zeros_like(flat)
    resid = rng.normal(size=(256, 1))
    soft = accel._NUMPY.softmax_rows(sims, 2.0)
    return [
        ("relu_fwd (8192x64)", lambda b: b.relu_fwd(act)),
        ("relu_bwd (8192x64)", lambda b: b.relu_bwd(act, act_g)),
        ("tanh_fwd (8192x64)", lambda b: b.tanh_fwd(act)),
        ("tanh_bwd (8192x64)", lambda b: b.tanh_bwd(act, act_g)),
        ("softmax_rows (64x128)", lambda b: b.softmax_rows(sims, 2.0)),
        ("softmax_rows_bwd (64x128)",
         lambda b: b.softmax_rows_bwd(soft, sims_g, 2.0)),
        ("adam_update (50k)",
         lambda b: b.adam_update(flat, m, v, flat_g, 3e-4, 0.9, 0.999,
                                 1e-8, 0.1, 0.01)),
        ("polyak_update (50k)",
         lambda b: b.polyak_update(flat, flat_g, 0.995)),
        ("huber_fwd (256x1)", lambda b: b.huber_fwd(resid, 1.0)),
        ("huber_bwd (256x1)", lambda b: b.huber_bwd(resid, 1.0)),
    ]


def bench_kernels() -> None:
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, call in kernel_cases(rng):
        times = {be: median_time(lambda: call(accel._REGISTRY[be]))
                 for be in accel.available_backends()}
        if "numba" not in times:
            print(f"{name:<28} {times['numpy'] * 1e6:>9.1f}u   (numba absent)")
            continue
        print(f"{name:<28} {times['numpy'] * 1e6:>9.1f}u "
              f"{times['numba'] * 1e6:>9.1f}u "
              f"{times['numpy'] / times['numba']:>7.2f}x")


def bench_training(updates: int) -> None:
    cfg = ExperimentConfig(
        env_id="pendulum", algorithm="savgo", seed=0,
        total_steps=1000 + updates, warmup_steps=1000, batch_size=64,
        hidden_sizes=(64, 64), num_candidates=32,
        anneal_steps=1000 + updates, eval_interval=1000 + updates,
        eval_episodes=1)
    default = accel.active_backend
    print(f"\ntraining slice: savgo on pendulum, {updates} updates, "
          f"batch 64, K=32")
    walls = {}
    for backend in accel.available_backends():
        accel.use_backend(backend)
        t0 = time.perf_counter()
        train(cfg)
        walls[backend] = time.perf_counter() - t0
        print(f"  {backend:<6} {walls[backend]:6.1f}s "
              f"({walls[backend] / updates * 1e3:.2f} ms/update)")
    accel.use_backend(default)
    if len(walls) == 2:
        print(f"  numpy/numba: {walls['numpy'] / walls['numba']:.2f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--updates", type=int, default=300,
                        help="training updates per backend")
    args = parser.parse_args()
    bench_kernels()
    bench_training(args.updates)
