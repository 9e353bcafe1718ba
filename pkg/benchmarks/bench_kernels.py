"""Compare the compiled and NumPy RK4 backends on the preset closed loops.

Usage: python3 benchmarks/bench_kernels.py [--horizon 20] [--repeat 3]
"""

import argparse
import time

import numpy as np

from coordreg.scenario import SimConfig, preset
from coordreg.sim import _rk4_compiled, assemble_closed_loop, integrate
from coordreg.synthesis import synthesize


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=float, default=20.0)
    ap.add_argument("--h", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _rk4_compiled is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")

    cfg = SimConfig(h=args.h, horizon=args.horizon, record_stride=10)
    print(f"{'scenario':<10} {'dim':>4} {'steps':>7} {'cython s':>9} {'python s':>9} {'speedup':>8} {'max diff':>9}")
    for name in ("example1", "example2", "example3"):
        sc = preset(name)
        system = assemble_closed_loop(sc, synthesize(sc))
        tc, trc = best_time(lambda: integrate(system, sc.schedule, cfg, backend="cython"), args.repeat)
        tp, trp = best_time(lambda: integrate(system, sc.schedule, cfg, backend="python"), args.repeat)
        scale = max(1.0, float(np.abs(trp.states).max()))
        diff = float(np.abs(trc.states - trp.states).max()) / scale
        steps = round(args.horizon / args.h)
        print(f"{name:<10} {system.dim:>4} {steps:>7} {tc:>9.3f} {tp:>9.3f} {tp / tc:>7.1f}x {diff:>9.1e}")


if __name__ == "__main__":
    main()
