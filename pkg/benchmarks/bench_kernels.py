"""Benchmark the compiled gradient kernel against the NumPy fallback.

Times the full-batch fused forward/backward pass (the training hot loop)
at the dimensions of the rating benchmark and of a small graph, for both
backends, plus a full training epoch through the optimizer.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from nnmf._kernels import HAVE_COMPILED, get_backend
from nnmf.data import DataSplit, ObservationSet
from nnmf.model import InitSpec, NnmfModel, init_model
from nnmf.optimizer import RmspropConfig, TrainSchedule, train


def synthetic_case(n_rows, n_cols, n_obs, layer_dims, D, Dp, K=1, seed=0):
    rng = np.random.default_rng(seed)
    net, state = init_model((n_rows, n_cols, D, Dp, K), layer_dims,
                            InitSpec(seed=seed))
    keys = rng.choice(n_rows * n_cols, size=n_obs, replace=False)
    rows = (keys // n_cols).astype(np.int64)
    cols = (keys % n_cols).astype(np.int64)
    values = rng.uniform(1, 5, size=n_obs)
    obs = ObservationSet(n_rows, n_cols, rows, cols, values)
    return net, state, obs


def time_callable(fn, repeats, warmup=1):
    for _ in range(warmup):
        fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_fused(net, state, obs, repeats):
    out = {}
    for name in ("numpy", "compiled") if HAVE_COMPILED else ("numpy",):
        backend = get_backend(name)
        fn = lambda: backend.fused_gradient(
            state.U, state.V, state.Uprime, state.Vprime,
            obs.rows, obs.cols, obs.values, net.weights, net.biases,
        )
        out[name] = time_callable(fn, repeats)
    return out


def bench_epoch(net, state, obs, epochs):
    out = {}
    split = DataSplit(train=obs, validation=obs, test=obs)
    for name in ("numpy", "compiled") if HAVE_COMPILED else ("numpy",):
        model = NnmfModel(net.copy(), state.copy(), backend=name)
        sched = TrainSchedule(max_epochs=epochs, patience=epochs)
        t0 = time.perf_counter()
        train(model, split, 0.1, sched, RmspropConfig())
        out[name] = (time.perf_counter() - t0) / epochs
    return out


def show(title, timings, per="call"):
    print(f"\n{title}")
    base = timings["numpy"]
    for name, t in timings.items():
        speed = f"  ({base / t:.2f}x vs numpy)" if name != "numpy" else ""
        print(f"  {name:>8}: {t * 1e3:9.2f} ms/{per}{speed}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="smaller batch and fewer repeats")
    args = parser.parse_args()

    if not HAVE_COMPILED:
        print("note: compiled kernel not built, timing the fallback only")

    n_obs = 20_000 if args.quick else 90_000
    repeats = 3 if args.quick else 5
    epochs = 3 if args.quick else 5

    net, state, obs = synthetic_case(
        943, 1682, n_obs, [80, 50, 50, 50, 1], D=10, Dp=60
    )
    show(f"rating-scale fused gradient (B={n_obs}, net 80-50-50-50-1)",
         bench_fused(net, state, obs, repeats))
    show("rating-scale full training epoch (both phases + evaluation)",
         bench_epoch(net, state, obs, epochs), per="epoch")

    net, state, obs = synthetic_case(
        234, 234, 27_144, [80, 50, 50, 50, 1], D=10, Dp=60, seed=1
    )
    show("graph-scale fused gradient (B=27144, net 80-50-50-50-1)",
         bench_fused(net, state, obs, repeats))


if __name__ == "__main__":
    main()
