"""Time the numba loop kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Compilation happens once before timing, so the figures are steady-state.
"""
import argparse
import timeit

import numpy as np

from fracshe import kernels
from fracshe._accel import jit_compile


def cases(rng):
    nodes = np.linspace(-16, 16, 256, endpoint=False)
    z = rng.standard_normal((2000, 8))
    z -= z.mean(axis=0)
    return {
        "volterra_product": ((rng.random(400), rng.random(400), rng.random(401)),),
        "lattice_image_sum": ((rng.uniform(-8, 8, (512, 2)), 32.0, np.array([1.0, 0.2, 0.05]),
                               np.array([3.5, 5.0, 6.5]), 8),),
        "ball_fractions_2d": ((nodes, nodes[1] - nodes[0], 11.3, 16),),
        "mardia_skewness": ((z, np.linalg.inv(z.T @ z / len(z))),),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, (call_args,) in cases(rng).items():
        fast = jit_compile(getattr(kernels, f"{name}_loop"))
        slow = getattr(kernels, f"{name}_numpy")
        a, b = fast(*call_args), slow(*call_args)
        if not np.allclose(a, b, rtol=1e-9):
            raise SystemExit(f"{name}: numba and numpy disagree")
        tf = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        ts = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<20} {1e3 * tf:>10.2f} {1e3 * ts:>10.2f} {ts / tf:>8.1f}")


if __name__ == "__main__":
    main()
