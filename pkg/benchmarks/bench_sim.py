"""Compare the compiled and pure-Python simulation kernels.

    python benchmarks/bench_sim.py [--runs N] [--repeat R]

Both kernels run the same replicas, so the outcome arrays must agree; the
script checks that before reporting timings.
"""

from __future__ import annotations

import argparse
import time
from importlib.resources import files

import numpy as np

from stochinv.pcfg import parse_pcfg, terminal_lpm
from stochinv.sim import SchedulerPolicy, _pykernel, compile_pcfg

try:
    from stochinv.sim import _kernel
except ImportError:
    _kernel = None

CASES = [
    # name, corpus file, max steps
    ("asymmetric walk", "asym_walk.pcfg", 100_000),
    ("repulsed walk", "repulse_walk.pcfg", 10_000),
    ("two walks", "two_walks.pcfg", 100_000),
]


def _time(kernel, cp, runs, max_steps, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kernel.run_replicas(cp, 7, 0, runs, max_steps, *SchedulerPolicy().args())
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernel is None:
        raise SystemExit("compiled kernel not built; run pip install -e . --no-build-isolation")
    corpus = files("stochinv") / "corpus"
    print(f"{'program':<16} {'runs':>6} {'mean steps':>10} {'python s':>9} {'cython s':>9} {'speedup':>8}")
    for name, fname, max_steps in CASES:
        pcfg = parse_pcfg((corpus / fname).read_text())
        cp = compile_pcfg(pcfg, terminal_lpm(pcfg) if fname.startswith("asym") else None)
        t_py, (c_py, s_py) = _time(_pykernel, cp, args.runs, max_steps, args.repeat)
        t_cy, (c_cy, s_cy) = _time(_kernel, cp, args.runs, max_steps, args.repeat)
        if not (np.array_equal(c_py, c_cy) and np.array_equal(s_py, s_cy)):
            raise SystemExit(f"{name}: kernels disagree")
        print(f"{name:<16} {args.runs:>6} {s_cy.mean():>10.1f} {t_py:>9.3f} {t_cy:>9.4f} {t_py / t_cy:>7.0f}x")


if __name__ == "__main__":
    main()
