"""Time the compiled and pure-Python kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best-of-``repeat`` wall time per call and whether the
largest absolute difference between the two backends' outputs (scatter-adds
may sum in a different order, so a few ulps are expected there).
"""
import argparse
import timeit

import numpy as np

from wdfqdet.kernels import available_backends


def cases(rng):
    x = rng.standard_normal((1, 32, 34, 34))
    cols = rng.standard_normal((1, 32 * 9, 32 * 32))
    fmap = rng.standard_normal((4, 32, 16, 16))
    pts = rng.uniform(size=(4, 600, 2))
    grad = rng.standard_normal((4, 600, 32))
    cost = rng.uniform(size=(6, 40))
    return {
        "im2col 3x3 (32ch, 32x32)": lambda k: k.im2col(x, 3, 3, 1, 1, 32, 32),
        "col2im 3x3 (32ch, 32x32)": lambda k: k.col2im(cols, 32, 34, 34, 3, 3, 1, 1, 32, 32),
        "bilinear_forward (2400 pts)": lambda k: k.bilinear_forward(fmap, pts),
        "bilinear_backward (2400 pts)": lambda k: k.bilinear_backward(fmap, pts, grad),
        "linear_assignment 6x40": lambda k: k.linear_assignment(cost),
    }


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=20)
    args = parser.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the python backend is available")
    names = sorted(backends)
    print(f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in names) + "   speedup  max |diff|")
    for label, call in cases(np.random.default_rng(0)).items():
        times = {n: min(timeit.repeat(lambda: call(backends[n]), number=args.number, repeat=args.repeat))
                 / args.number for n in names}
        row = f"{label:32s}" + "".join(f"{times[n] * 1e3:10.3f}ms" for n in names)
        if len(names) == 2:
            outs = [call(backends[n]) for n in names]
            row += f"{times['python'] / times['cython']:9.1f}x  {max_diff(*outs):.1e}"
        print(row)


if __name__ == "__main__":
    main()
