"""Compare the compiled and pure-Python kernels on the exhaustive
quorum-intersection check.

    python3 benchmarks/bench_bft_check.py [--repeat 3]
"""

import argparse
import time

from bft_safety import _accel
from bft_safety.quorum import EpochConfig, check_bft_assumption

CASES = [(7, 2), (10, 3), (12, 3)]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t)
    return min(times), result


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [("python", _accel.python_kernels)]
    if _accel.compiled_kernels is not None:
        backends.insert(0, ("cython", _accel.compiled_kernels))
    else:
        print("compiled kernels unavailable; timing the fallback only")
    print(f"{'n':>3} {'f':>3} " + " ".join(f"{name:>10}" for name, _ in backends) + "   speedup")
    for n, f in CASES:
        cfg = EpochConfig.count(n, f)
        row, results = [], []
        for _, k in backends:
            t, res = best_of(lambda: check_bft_assumption(cfg, kernels=k), args.repeat)
            row.append(t)
            results.append(res)
        assert all(r == results[0] for r in results), "backends disagree"
        speed = f"{row[-1] / row[0]:9.1f}x" if len(row) == 2 else ""
        print(f"{n:>3} {f:>3} " + " ".join(f"{t:9.4f}s" for t in row) + "  " + speed)


if __name__ == "__main__":
    main()
