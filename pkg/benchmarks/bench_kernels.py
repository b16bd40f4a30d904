"""Compare the compiled and pure-Python kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Prints the best-of-``repeat`` wall time per kernel and backend, the speedup
of the compiled backend, and the largest absolute difference between the
two outputs.
"""
import argparse
import time

import numpy as np

from ptsne import kernels, wtt


def cases(scale, rng):
    n = max(int(400 * scale), 10)
    X = rng.normal(size=(n, 10))
    D2 = kernels.available_backends()["python"].sqdist(X)
    Y = rng.normal(size=(n, 2))
    C = np.exp(-D2)
    np.fill_diagonal(C, 0.0)
    C /= C.sum(axis=1, keepdims=True)
    P = (C + C.T) / (2 * n)
    grid = max(int(150 * scale), 10)
    pts = rng.normal(size=(n, 2))
    xc = np.linspace(-4, 4, grid)
    v = rng.random((grid, grid))
    for _ in range(3):
        p = np.pad(v, 1, mode="edge")
        v = sum(p[dy:dy + grid, dx:dx + grid] for dy in range(3) for dx in range(3)) / 9.0
    order = wtt.descending_order(v)
    return {
        "sqdist": lambda m: m.sqdist(X),
        "tsne_gradient": lambda m: m.tsne_gradient(P, Y),
        "cross_entropy": lambda m: m.cross_entropy(P, Y),
        "beta_search": lambda m: m.beta_search(D2, np.log(30.0), 1e-5, 200, True)[0],
        "kde_grid": lambda m: m.kde_grid(pts, np.full(n, 2.0), xc, xc, np.inf),
        "water_track": lambda m: m.water_track(v, order)[0],
    }


def best_time(fn, repeat):
    out, times = None, []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="problem size multiplier")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the Python backend only")
    names = sorted(backends)
    print(f"{'kernel':<15}" + "".join(f"{b + ' [s]':>14}" for b in names) + f"{'speedup':>10}{'max |diff|':>13}")
    for kernel, fn in cases(args.scale, np.random.default_rng(0)).items():
        res = {b: best_time(lambda: fn(backends[b]), args.repeat) for b in names}
        line = f"{kernel:<15}" + "".join(f"{res[b][0]:>14.5f}" for b in names)
        if len(names) == 2:
            diff = np.max(np.abs(np.asarray(res["cython"][1], float) - np.asarray(res["python"][1], float)))
            line += f"{res['python'][0] / res['cython'][0]:>10.1f}{diff:>13.2e}"
        print(line)


if __name__ == "__main__":
    main()
