"""Time the numba and numpy kernel paths, and one SCA design under each.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 200]

The end-to-end rows run in subprocesses so the ``OTFSNOMA_NUMBA`` flag is
honoured at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from otfsnoma import _accel

E2E = """
import time, numpy as np
from otfsnoma.experiment import _channel_for
from otfsnoma.optimize import sca_solve
from otfsnoma.rates import ProblemParams
ch = _channel_for(1, 8, 8, 4, 0.1)
p = ProblemParams.from_db(8, 8, 4, 30.0, sigma=0.1)
sca_solve(ch, p, np.random.default_rng(0))  # warm-up (JIT compile / cache load)
t0 = time.perf_counter()
for s in range(5):
    sca_solve(ch, p, np.random.default_rng(s))
print((time.perf_counter() - t0) / 5)
"""


def bench(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=5)) / repeat


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    if _accel.numba is None:
        sys.exit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    V = 4
    w = rng.standard_normal(V) + 1j * rng.standard_normal(V)
    H = rng.standard_normal((64, V)) + 1j * rng.standard_normal((64, V))
    E = rng.standard_normal((1 << 16, V)) + 1j * rng.standard_normal((1 << 16, V))
    cases = [
        ("inv_power_terms (64 x 4)", "inv_power_terms", (w, H), args.repeat),
        ("robust_terms (64 x 4)", "robust_terms", (w, H, 0.1), args.repeat),
        ("sampled_min_power (65536 x 4)", "sampled_min_power", (w, H[0], E), max(1, args.repeat // 50)),
    ]
    print(f"{'kernel':32s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speed-up':>9s}")
    for label, name, fargs, rep in cases:
        t_np = bench(getattr(_accel, name + "_numpy"), fargs, rep)
        t_nb = bench(getattr(_accel, name + "_numba"), fargs, rep)
        print(f"{label:32s} {t_np * 1e6:12.2f} {t_nb * 1e6:12.2f} {t_np / t_nb:9.2f}")

    times = {}
    for flag in ("0", "1"):
        env = dict(os.environ, OTFSNOMA_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        times[flag] = float(out.stdout.strip())
    print(f"{'sca_solve, 10 starts (V=4)':32s} {times['0'] * 1e6:12.0f} {times['1'] * 1e6:12.0f} "
          f"{times['0'] / times['1']:9.2f}")


if __name__ == "__main__":
    main()
