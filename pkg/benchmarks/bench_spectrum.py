"""Benchmark the spectrum denominator kernel backends against each other.

Shapes match real runs on the default numerology: 8 antennas x 76 tones give
a 608-dimensional space-frequency steering space, searched either over a few
pruned delay windows or over the full 304-bin delay grid, in both projection
modes (signal-subspace complement with a small basis, direct noise-subspace
projection with a large one).  Each case is cross-checked between backends
before timing.

Usage:
    python3 benchmarks/bench_spectrum.py [--repeats N] [--seed S]
"""

import argparse
import time
from dataclasses import dataclass

import numpy as np

from isactrack._spectrum import available_backends, get_kernel


@dataclass
class Case:
    label: str
    antenna_count: int
    tone_count: int
    rank: int
    delay_rows: int
    angle_rows: int
    complement: bool

    @property
    def cells(self) -> int:
        return self.delay_rows * self.angle_rows


CASES = [
    Case("pruned windows, complement", 8, 76, 3, 27, 181, True),
    Case("pruned windows, direct", 8, 76, 605, 27, 181, False),
    Case("full grid, complement", 8, 76, 3, 304, 181, True),
    Case("full grid, direct", 8, 76, 605, 304, 181, False),
]


def orthonormal_basis(rng: np.random.Generator, dim: int, rank: int) -> np.ndarray:
    z = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    q, _ = np.linalg.qr(z)
    return np.ascontiguousarray(q)


def unit_rows(rng: np.random.Generator, rows: int, width: int) -> np.ndarray:
    return np.exp(2j * np.pi * rng.uniform(size=(rows, width)))


def best_time_s(kernel, args, repeats: int) -> float:
    kernel(*args)  # warm-up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        kernel(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timed runs per case")
    parser.add_argument("--seed", type=int, default=0, help="input generator seed")
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if "cython" not in backends:
        print("compiled kernel not built; timing the NumPy fallback only")

    header = f"{'case':<28} {'cells':>7}"
    for name in backends:
        header += f" {name + ' (ms)':>12}"
    if len(backends) > 1:
        header += f" {'speedup':>8} {'max rel diff':>13}"
    print(header)

    rng = np.random.default_rng(args.seed)
    for case in CASES:
        dim = case.antenna_count * case.tone_count
        inputs = (
            orthonormal_basis(rng, dim, case.rank),
            unit_rows(rng, case.delay_rows, case.tone_count),
            unit_rows(rng, case.angle_rows, case.antenna_count),
            case.complement,
        )
        times = {}
        grids = {}
        for name in backends:
            kernel = get_kernel(name)
            grids[name] = kernel(*inputs)
            times[name] = best_time_s(kernel, inputs, args.repeats)

        row = f"{case.label:<28} {case.cells:>7}"
        for name in backends:
            row += f" {times[name] * 1e3:>12.2f}"
        if len(backends) > 1:
            scale = np.abs(grids["numpy"]).max()
            diff = np.abs(grids["cython"] - grids["numpy"]).max() / scale
            row += f" {times['numpy'] / times['cython']:>7.1f}x {diff:>13.1e}"
        print(row)


if __name__ == "__main__":
    main()
