"""Time the numba kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--mesh 48] [--steps 100] [--repeat 3]
"""

import argparse
import time

import numpy as np

from qsh_transport import _accel
from qsh_transport.mesh import BZMesh
from qsh_transport.model import builtin_model
from qsh_transport.spectral import spectral_batch


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mesh", type=int, default=48)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    model = builtin_model("kane_mele", {"lambda_R": 0.1})
    kpts = BZMesh.for_model(model, args.mesh).kpts
    bonds, amps, rows, cols = model.compiled
    dim = model.fiber_dim
    rho0 = spectral_batch(model, kpts).P
    steps = np.full(args.steps, 0.02)
    shifts = np.zeros((args.steps, 2))
    shifts[:, 1] = np.linspace(0.0, 0.1, args.steps)
    record = np.array([args.steps])

    backends = ["numpy"] + (["numba"] if _accel.HAS_NUMBA else [])
    results = {}
    for be in backends:
        # warm-up call compiles (or loads cached) numba code
        _accel.assemble_bloch(kpts[:4], bonds, amps, rows, cols, dim, True, be)
        _accel.evolve(kpts[:4], rho0[:4], bonds, amps, rows, cols, dim, shifts[:2], steps[:2], np.array([2]), be)
        ta, H = best_of(lambda: _accel.assemble_bloch(kpts, bonds, amps, rows, cols, dim, True, be), args.repeat)
        te, R = best_of(lambda: _accel.evolve(kpts, rho0, bonds, amps, rows, cols, dim, shifts, steps, record, be),
                        args.repeat)
        results[be] = (ta, te, H, R)
        print(f"{be:6s} assemble_bloch {ta * 1e3:9.2f} ms   evolve {te * 1e3:9.2f} ms")
    if len(results) == 2:
        a, b = results["numpy"], results["numba"]
        print(f"speed-up (numpy / numba): assemble {a[0] / b[0]:.2f}x, evolve {a[1] / b[1]:.2f}x")
        print(f"max |H| difference {np.abs(a[2][0] - b[2][0]).max():.2e}, "
              f"max |rho| difference {np.abs(a[3] - b[3]).max():.2e}")


if __name__ == "__main__":
    main()
