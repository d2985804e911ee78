import os
import subprocess
import sys

import numpy as np
import pytest

from rydlattice import _kernels_py as py_kernels
from rydlattice import kernels
from rydlattice.classical import all_rates
from rydlattice.core import LatticeModel, fock_state
from rydlattice.longtime import ShellOrdering
from rydlattice.master import build_generator
from rydlattice.qjmc import NoJumpPropagator

from conftest import random_density

compiled = pytest.importorskip("rydlattice._kernels")


@pytest.fixture
def pinned_generator():
    return build_generator(LatticeModel(5, 40.0, 0.3, 0.2, frozenset({(5, 1)})))


def test_compiled_backend_is_selected():
    assert kernels.BACKEND == "cython"


def test_environment_variable_forces_python_backend():
    env = dict(os.environ, RYDLATTICE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c",
                          "from rydlattice import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_liouvillian_apply_backends_agree(pinned_generator, rng):
    gen = pinned_generator
    rho = random_density(gen.dim, rng)
    args = (gen.diagonal, gen.hamiltonian.flip_masks, gen.omega)
    a = py_kernels.liouvillian_apply(rho, *args, np.empty_like(rho))
    b = compiled.liouvillian_apply(rho, *args, np.empty_like(rho))
    assert np.allclose(a, b, atol=1e-14)


def test_drive_apply_backends_agree(pinned_generator, rng):
    gen = pinned_generator
    rho = random_density(gen.dim, rng)
    args = (gen.hamiltonian.flip_masks, gen.omega)
    a = py_kernels.drive_apply(rho, *args, np.empty_like(rho))
    b = compiled.drive_apply(rho, *args, np.empty_like(rho))
    assert np.allclose(a, b, atol=1e-14)


def test_shell_kernels_backends_agree(pinned_generator, rng):
    gen = pinned_generator
    d = gen.dim
    shells = ShellOrdering(d)
    masks = np.ascontiguousarray(gen.hamiltonian.flip_masks, dtype=np.int64)
    shifted = 1e-3 - gen.diagonal
    args = (shells.order, shells.bounds, masks, gen.omega)
    inv_a = py_kernels.shell_dress(shifted, *args)
    inv_b = compiled.shell_dress(shifted, *args)
    assert np.allclose(inv_a, inv_b, rtol=1e-13, atol=0)
    b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    fa, fb = b.copy(), b.copy()
    py_kernels.shell_forward(fa, *args, inv_a)
    compiled.shell_forward(fb, *args, inv_a)
    assert np.allclose(fa, fb, atol=1e-13)
    xa, xb = np.zeros((d, d), dtype=complex), np.zeros((d, d), dtype=complex)
    xa.ravel()[shells.populations] = 1.0
    xb.ravel()[shells.populations] = 1.0
    back = (shells.order, shells.bounds[:-1], masks, gen.omega)
    py_kernels.shell_backward(xa, fa, *back, inv_a)
    compiled.shell_backward(xb, fa, *back, inv_a)
    assert np.allclose(xa, xb, atol=1e-13)


def test_kmc_sample_backends_are_identical():
    model = LatticeModel(6, 160.0, 0.05, 0.5, frozenset({(6, 0)}))
    rates = all_rates(model)
    times = np.linspace(0.0, 5e4, 60)
    a = py_kernels.kmc_sample(4, rates, rates.sum(axis=1), times,
                              np.random.default_rng(7), 10**8)
    b = compiled.kmc_sample(4, rates, rates.sum(axis=1), times,
                            np.random.default_rng(7), 10**8)
    assert np.array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_kmc_event_budget_is_enforced():
    model = LatticeModel(3, 1.0, 1.0, 1.0)
    rates = all_rates(model)
    for backend in (py_kernels, compiled):
        with pytest.raises(RuntimeError):
            backend.kmc_sample(0, rates, rates.sum(axis=1), np.array([0.0, 1e6]),
                               np.random.default_rng(0), 10)


def test_qjmc_propagate_backends_agree():
    model = LatticeModel(5, 160.0, 0.01, 0.1)
    prop = NoJumpPropagator.from_model(model)
    psi = fock_state(model, "ggegg").amplitudes
    grid = np.linspace(0.0, 2000.0, 41)
    args = (psi, prop.eigenvalues, prop.vectors, prop.inverse, prop.excitation, prop.masks,
            prop.gamma, grid)
    a = py_kernels.qjmc_propagate(*args, np.random.default_rng(3), 1e-10, 10**6)
    b = compiled.qjmc_propagate(*args, np.random.default_rng(3), 1e-10, 10**6)
    assert list(a[2]) == list(b[2])
    assert np.allclose(a[1], b[1], rtol=1e-8)
    assert np.abs(np.abs(a[0]) ** 2 - np.abs(b[0]) ** 2).max() < 1e-6
