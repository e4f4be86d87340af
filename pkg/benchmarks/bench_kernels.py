"""Compare the compiled and numpy convolution backends.

    python3 benchmarks/bench_kernels.py [--batch 32] [--repeat 200] [--epoch-windows 2000]

Reports per-call times for one layer and for a full forward + backward pass
of the standard network, plus one training epoch, under each backend, and
checks that both backends produce the same numbers.
"""
from __future__ import annotations

import argparse
import statistics
import time
from contextlib import contextmanager

import numpy as np

from volcast.tcn import TcnModel, TrainConfig, _pykernels, kernels, train
from volcast.marketdata import WindowedDataset

try:
    from volcast.tcn import _ckernels
except ImportError:
    _ckernels = None


@contextmanager
def backend(impl):
    saved = kernels.conv1d_forward, kernels.conv1d_backward
    kernels.conv1d_forward, kernels.conv1d_backward = impl.conv1d_forward, impl.conv1d_backward
    try:
        yield
    finally:
        kernels.conv1d_forward, kernels.conv1d_backward = saved


def best_of(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def run(args) -> None:
    rng = np.random.default_rng(0)
    model = TcnModel.standard(seed=0)
    x = rng.normal(size=(args.batch, 64))
    layer = model.layers[3]
    h = rng.normal(size=(args.batch, 8, 64))
    raw = np.cumsum(rng.normal(0, 0.01, (args.epoch_windows, 65)), axis=1) + 0.3
    ds = WindowedDataset.from_slices(raw, ["B"] * args.epoch_windows,
                                     np.datetime64("2020-01-01") + np.arange(args.epoch_windows))
    cfg = TrainConfig(epochs=1, seed=0)

    impls = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels is not None else [])
    results, outputs = {}, {}
    for name, impl in impls:
        with backend(impl):
            def layer_fb():
                out = impl.conv1d_forward(h, layer.weights, layer.biases, layer.dilation, True)
                impl.conv1d_backward(h, layer.weights, layer.dilation, True, out, out, True)

            def net_fb():
                out, tape = model.forward(x)
                return model.backward(tape, out)

            results[name] = {
                "layer fwd+bwd": best_of(layer_fb, args.repeat),
                "network fwd+bwd": best_of(net_fb, args.repeat),
                "training epoch": best_of(lambda: train(model, ds, cfg), 3),
            }
            outputs[name] = net_fb()

    print(f"batch {args.batch}, epoch of {args.epoch_windows} windows, median timings")
    print(f"{'':<18}" + "".join(f"{n:>14}" for n, _ in impls) + ("       speedup" if len(impls) > 1 else ""))
    for key in results["python"]:
        row = f"{key:<18}" + "".join(f"{results[n][key] * 1e3:>12.3f}ms" for n, _ in impls)
        if len(impls) > 1:
            row += f"{results['python'][key] / results['cython'][key]:>13.1f}x"
        print(row)
    if len(impls) > 1:
        diff = np.max(np.abs(outputs["python"] - outputs["cython"]))
        print(f"max |gradient difference| between backends: {diff:.3g}")
    else:
        print("compiled extension not available; only the numpy backend was timed")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--epoch-windows", type=int, default=2000)
    run(parser.parse_args())


if __name__ == "__main__":
    main()
