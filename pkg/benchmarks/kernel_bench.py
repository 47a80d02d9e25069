"""Timing comparison: compiled loop kernels vs their vectorized numpy twins.

Run as a script:

    python3 benchmarks/kernel_bench.py [--sizes 2x2,6x6] [--repeats 200]

Both implementations are always importable; which one the package dispatches
to is controlled by CRANOPT_DISABLE_NUMBA. The numbers here justify keeping
the compiled path as the default (and quantify what the fallback costs).
"""

import argparse
import time

import numpy as np

from cranopt._accel import NUMBA_ENABLED
from cranopt.channel import generate_dataset
from cranopt.cranmodel import SystemInstance
from cranopt.kernels import loops, vectorized


def _bench(fn, args, repeats):
    fn(*args)  # warmup / compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def _cases(m, k, seed=0):
    sample = generate_dataset(1, m, k, seed=(seed, 50, m, k))[0]
    inst = SystemInstance.from_sample(sample)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 51, m, k)))
    h = np.ascontiguousarray(inst.h)
    p = 10.0 ** rng.uniform(-1, 1, k)
    lam = 10.0 ** rng.uniform(-1, 1, k)
    mu = 10.0 ** rng.uniform(-1, 1, m)
    beta, ptil = inst.beta, inst.effective_power
    fwd = loops.recover_forward(h, p, lam, mu, ptil, beta)
    _, lower, ut, nrm, row_power, istar, s, v, omega = fwd
    rates, amat, denom = loops.rates_forward(h, v, omega)
    gf = np.full(k, -1.0)
    gv, gomega = loops.rates_backward(h, v, omega, amat, denom, gf)
    cases = [
        ("recover_forward", (h, p, lam, mu, ptil, beta)),
        ("recover_backward", (h, p, beta, lower, ut, nrm, row_power, istar, s, v, gv, gomega)),
        ("rates_forward", (h, v, omega)),
        ("rates_backward", (h, v, omega, amat, denom, gf)),
        ("sumrate_with_grad", (h, v, beta)),
    ]
    if m * k <= 2:
        na, nph = 9, 8
        amp = np.vstack([np.linspace(0, 1, na)] * (m * k))
        ph = np.vstack([np.linspace(0, 2 * np.pi * (nph - 1) / nph, nph)] * max(m * k - 1, 1))
        cases.append(("bf_search_9x8", (h, beta, ptil, amp, ph)))
    return cases


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="2x1,2x2,4x4,6x6")
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if not NUMBA_ENABLED:
        print("note: numba is disabled/unavailable; 'loops' below run as plain python")
    print(f"{'kernel':<22} {'size':<6} {'loops':>12} {'numpy':>12} {'ratio':>8}")
    for size in args.sizes.split(","):
        m, k = (int(x) for x in size.strip().split("x"))
        for name, call_args in _cases(m, k):
            t_loops = _bench(getattr(loops, name.split("_9x8")[0]), call_args, args.repeats)
            t_numpy = _bench(getattr(vectorized, name.split("_9x8")[0]), call_args, args.repeats)
            ratio = t_numpy / t_loops if t_loops > 0 else float("inf")
            print(
                f"{name:<22} {m}x{k:<4} {t_loops * 1e6:>10.2f}us {t_numpy * 1e6:>10.2f}us"
                f" {ratio:>7.1f}x"
            )


if __name__ == "__main__":
    main()
