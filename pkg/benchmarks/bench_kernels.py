"""Compare the compiled interval kernels against their pure-Python twins.

Usage: python benchmarks/bench_kernels.py [--pairs N] [--scans N]
"""
from __future__ import annotations

import argparse
import random
import time

import numpy as np

from chronokg._kernels import pykern

try:
    from chronokg._kernels import ckern
except ImportError:
    ckern = None


def _time(fn, *args) -> float:
    t0 = time.perf_counter()
    fn(*args)
    return time.perf_counter() - t0


def bench_allen(n_pairs: int, rng: random.Random) -> dict[str, float]:
    pairs = []
    for _ in range(n_pairs):
        a = sorted(rng.randrange(0, 10_000) for _ in range(2))
        b = sorted(rng.randrange(0, 10_000) for _ in range(2))
        pairs.append((a[0], a[1], b[0], b[1]))

    def run(code_fn):
        acc = 0
        for a0, a1, b0, b1 in pairs:
            acc += code_fn(a0, a1, b0, b1)
        return acc

    out = {"pure": _time(run, pykern.allen_code)}
    if ckern is not None:
        out["compiled"] = _time(run, ckern.allen_code)
    return out


def bench_scan(n_scans: int, rng: random.Random) -> dict[str, float]:
    slot = 1800
    n_entries = 200_000
    starts = np.arange(n_entries, dtype=np.int64) * slot
    ends = starts + slot
    windows = []
    for _ in range(n_scans):
        lo = rng.randrange(0, n_entries - 64) * slot
        windows.append((lo, lo + 48 * slot - 1))

    def run(scan_fn, s, e):
        total = 0
        for ws, we in windows:
            total += len(scan_fn(s, e, ws, we, 0))
        return total

    starts_list = starts.tolist()
    ends_list = ends.tolist()
    out = {"pure": _time(run, pykern.scan_intersecting, starts_list, ends_list)}
    if ckern is not None:
        out["compiled"] = _time(run, ckern.scan_intersecting, starts, ends)
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pairs", type=int, default=200_000)
    parser.add_argument("--scans", type=int, default=2_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    print(f"interval classification ({args.pairs} pairs)")
    allen = bench_allen(args.pairs, rng)
    for lane, seconds in allen.items():
        print(f"  {lane:>8}: {seconds:.3f}s  ({args.pairs / seconds / 1e6:.2f} M ops/s)")
    if "compiled" in allen:
        print(f"  speedup: {allen['pure'] / allen['compiled']:.1f}x")

    print(f"index window scans ({args.scans} scans over 200k entries)")
    scans = bench_scan(args.scans, rng)
    for lane, seconds in scans.items():
        print(f"  {lane:>8}: {seconds:.3f}s")
    if "compiled" in scans:
        print(f"  speedup: {scans['pure'] / scans['compiled']:.1f}x")
    if ckern is None:
        print("compiled lane unavailable (install built without the extension)")


if __name__ == "__main__":
    main()
