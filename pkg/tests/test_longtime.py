import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from rydlattice.core import LatticeModel
from rydlattice.longtime import (HermitianPacker, ResolventSolver, ShellOrdering,
                                 SplitStepper, shift_schedule, split_step_limit)
from rydlattice.master import build_generator, stationary_state

from conftest import dense_liouvillian, random_density


@given(dim=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_hermitian_packing_round_trip(dim, seed):
    rho = random_density(dim, np.random.default_rng(seed))
    packer = HermitianPacker(dim)
    vec = packer.pack(rho)
    assert vec.dtype == float
    assert np.allclose(packer.unpack(vec), rho, atol=1e-14)


def test_hermitian_packing_is_an_isometry(rng):
    packer = HermitianPacker(4)
    a, b = random_density(4, rng), random_density(4, rng)
    assert packer.pack(a) @ packer.pack(b) == pytest.approx(np.trace(a @ b).real)


def test_shell_ordering_puts_populations_last():
    shells = ShellOrdering(8)
    assert sorted(shells.order) == list(range(64))
    assert set(shells.order[-8:]) == set(shells.populations)
    assert shells.bounds[-1] == 64


def test_split_stepper_matches_exponential_to_second_order(rng):
    model = LatticeModel(3, 30.0, 0.2, 0.3)
    gen = build_generator(model)
    rho = random_density(model.dim, rng)
    exact = (sla.expm(dense_liouvillian(3, 0.2, 0.3, 30.0) * 5.0) @ rho.ravel()).reshape(8, 8)
    errors = [np.abs(SplitStepper(gen).advance(rho, 5.0, h) - exact).max()
              for h in (0.1, 0.05)]
    assert errors[0] < 1e-4
    # at least second order: halving the step cuts the error by 4 or more
    assert errors[1] <= errors[0] / 4


def test_split_stepper_keeps_positivity_and_trace(rng):
    model = LatticeModel(4, 100.0, 0.5, 0.01)
    gen = build_generator(model)
    rho = SplitStepper(gen).advance(random_density(model.dim, rng), 50.0,
                                    split_step_limit(gen))
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(rho)[0] > -1e-13


def test_resolvent_solve_residual(rng):
    model = LatticeModel(4, 60.0, 0.05, 0.5)
    gen = build_generator(model)
    rho_st = stationary_state(model)
    solver = ResolventSolver(gen, rho_st)
    rhs = random_density(model.dim, rng) - rho_st
    sigma = 1e-3
    x = solver.solve(sigma, rhs)
    residual = sigma * x - gen.apply(x) - rhs
    assert np.abs(residual).max() < 1e-7 * np.abs(rhs).max()


def test_shift_schedule_is_positive_and_spans_the_horizon():
    shifts = shift_schedule(0.1, 1e12)
    assert np.all(shifts > 0)
    assert shifts.min() <= 1e-11
