"""Compare the compiled and pure-Python PAVA kernels.

Run from the repository root after an editable install::

    python benchmarks/bench_kernels.py [--repeat 5]

Three workloads are timed with both backends: a single long vector, a batch
of rows (one per query, as in prediction) and an end-to-end MGFR
``predict_batch`` call. Outputs are checked for bit-identity first.
"""
import argparse
import timeit
from contextlib import contextmanager

import numpy as np

from mgfr import _fallback, kernels, metric_spaces, predict_batch, regression, train
from mgfr.simulation import SimConfig, simulate

try:
    from mgfr import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


@contextmanager
def backend(mod):
    saved = (metric_spaces.pava, metric_spaces.pava_rows, regression.pava_rows)
    metric_spaces.pava, metric_spaces.pava_rows = mod.pava, mod.pava_rows
    regression.pava_rows = mod.pava_rows
    try:
        yield
    finally:
        metric_spaces.pava, metric_spaces.pava_rows, regression.pava_rows = saved


def best_of(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.2:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install --no-build-isolation -e .`")

    rng = np.random.default_rng(0)
    # noisy increasing signals: many short violator blocks
    vec = np.cumsum(rng.normal(0.01, 1.0, size=100_000))
    rows = np.cumsum(rng.normal(0.01, 1.0, size=(500, 100)), axis=1)
    for mod in (_fallback, _kernels):
        assert mod.pava(vec).tobytes() == _kernels.pava(vec).tobytes()
        assert mod.pava_rows(rows).tobytes() == _kernels.pava_rows(rows).tobytes()

    ds = simulate(SimConfig(n=400, seed=1), with_truth=False)
    model = train(ds.X, ds.responses, ds.Y, kind="MGFR")

    workloads = [
        ("pava, 1 x 100000", lambda m: (lambda: m.pava(vec))),
        ("pava_rows, 500 x 100", lambda m: (lambda: m.pava_rows(rows))),
        ("predict_batch MGFR, n=400", lambda m: (lambda: predict_batch(model, ds.X))),
    ]
    print(f"active backend at import: {kernels.BACKEND}")
    print(f"{'workload':<28} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}")
    for name, make in workloads:
        times = {}
        for label, mod in (("python", _fallback), ("cython", _kernels)):
            with backend(mod):
                times[label] = best_of(make(mod), args.repeat)
        print(f"{name:<28} {1e3 * times['python']:>12.3f} {1e3 * times['cython']:>12.3f} "
              f"{times['python'] / times['cython']:>7.1f}x")


if __name__ == "__main__":
    main()
