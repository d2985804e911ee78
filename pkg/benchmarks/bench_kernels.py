"""Time the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat K]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rydlattice import _kernels_py as python_backend
from rydlattice.classical import all_rates
from rydlattice.core import LatticeModel, fock_state
from rydlattice.longtime import ShellOrdering
from rydlattice.master import build_generator
from rydlattice.qjmc import NoJumpPropagator

try:
    from rydlattice import _kernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases():
    model = LatticeModel(8, 160.0, 0.01, 0.1)
    gen = build_generator(model)
    rng = np.random.default_rng(0)
    rho = rng.normal(size=(gen.dim, gen.dim)) + 1j * rng.normal(size=(gen.dim, gen.dim))
    masks = np.ascontiguousarray(gen.hamiltonian.flip_masks, dtype=np.int64)
    shells = ShellOrdering(gen.dim)
    shifted = 1e-3 - gen.diagonal
    shell_args = (shells.order, shells.bounds, masks, gen.omega)
    rates = all_rates(LatticeModel(8, 160.0, 0.0033, 0.1))
    kmc_grid = np.linspace(0.0, 1e7, 50)
    small = LatticeModel(6, 160.0, 0.01, 0.1)
    prop = NoJumpPropagator.from_model(small)
    psi = fock_state(small, "ggggeg").amplitudes
    qjmc_grid = np.linspace(0.0, 1e3, 50)

    def liouvillian(backend):
        out = np.empty_like(rho)
        return lambda: backend.liouvillian_apply(rho, gen.diagonal, gen.hamiltonian.flip_masks,
                                                 gen.omega, out)

    def shell_dress(backend):
        return lambda: backend.shell_dress(shifted, *shell_args)

    def shell_sweep(backend):
        inv = python_backend.shell_dress(shifted, *shell_args)
        b = rho.copy()
        return lambda: backend.shell_forward(b, *shell_args, inv)

    def kmc(backend):
        return lambda: backend.kmc_sample(16, rates, rates.sum(axis=1), kmc_grid,
                                          np.random.default_rng(1), 10**9)

    def qjmc(backend):
        return lambda: backend.qjmc_propagate(psi, prop.eigenvalues, prop.vectors, prop.inverse,
                                              prop.excitation, prop.masks, prop.gamma, qjmc_grid,
                                              np.random.default_rng(2), 1e-8, 10**6)

    return {"liouvillian_apply N=8": liouvillian, "shell_dress N=8": shell_dress,
            "shell_forward N=8": shell_sweep, "kmc_sample N=8": kmc,
            "qjmc_propagate N=6": qjmc}


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    print(f"{'kernel':<24}{'python [s]':>12}{'cython [s]':>12}{'speed-up':>10}")
    for name, make in cases().items():
        slow = best_of(make(python_backend), args.repeat)
        if compiled_backend is None:
            print(f"{name:<24}{slow:>12.4g}{'n/a':>12}{'n/a':>10}")
            continue
        fast = best_of(make(compiled_backend), args.repeat)
        print(f"{name:<24}{slow:>12.4g}{fast:>12.4g}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
