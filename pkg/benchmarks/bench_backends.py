"""Compare the JIT and pure-numpy implementations of the hot kernels.

Runs each kernel on representative problem sizes, checks the outputs agree,
and prints per-call timings with the speedup.  Usage:

    python benchmarks/bench_backends.py

Force the numpy path everywhere else with MOLLIPDE_BACKEND=numpy; this script
always times both implementations side by side.
"""

import time

import numpy as np

import mollipde.backend as backend
from mollipde.backend import reference_functions


def timeit(fn, *args, repeat=20):
    fn(*args)  # warm-up (jit compilation, caches)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    if not backend.HAS_NUMBA:
        print("numba backend not active; timing the numpy path against itself")
    ref = reference_functions()
    rng = np.random.default_rng(0)

    cases = []
    x1 = rng.standard_normal(100_000)
    taps1 = rng.standard_normal(11)
    cases.append(("correlate1d  (1e5 pts, 11 taps)", "correlate1d", (x1, taps1)))
    c1 = np.zeros_like(x1)
    c1[5:-5] = rng.standard_normal(x1.size - 10)
    cases.append(("scatter1d    (1e5 pts, 11 taps)", "scatter1d", (c1, taps1)))

    x2 = rng.standard_normal((256, 256))
    taps2 = rng.standard_normal((7, 7))
    cases.append(("correlate2d  (256^2, 7x7 taps)", "correlate2d", (x2, taps2)))
    c2 = np.zeros_like(x2)
    c2[3:-3, 3:-3] = rng.standard_normal((250, 250))
    cases.append(("scatter2d    (256^2, 7x7 taps)", "scatter2d", (c2, taps2)))

    phi_n = np.full((64, 64), 0.2)
    phi_d = 0.1 * rng.standard_normal((64, 64))
    lam = np.full((64, 64), 1.2)
    cases.append(("phase_field_step (64^2)", "phase_field_step",
                  (phi_n, phi_d, lam, 0.8, 0.12 ** 2, 1 / 0.05 ** 2, 1e-5)))

    print(f"{'kernel':<34} {'active':>10} {'numpy':>10} {'speedup':>9}  agree")
    for label, name, args in cases:
        fast = getattr(backend, name)
        slow = ref[name]
        t_fast = timeit(fast, *args)
        t_slow = timeit(slow, *args)
        out_fast = fast(*args)
        out_slow = slow(*args)
        if name == "phase_field_step":
            agree = all(np.allclose(a, b, atol=1e-12)
                        for a, b in zip(out_fast[:2], out_slow[:2]))
        else:
            agree = np.array_equal(out_fast, out_slow)
        print(f"{label:<34} {t_fast * 1e3:>8.3f}ms {t_slow * 1e3:>8.3f}ms "
              f"{t_slow / t_fast:>8.2f}x  {agree}")


if __name__ == "__main__":
    main()
