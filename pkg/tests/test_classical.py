import numpy as np
import pytest
from hypothesis import given, strategies as st

from rydlattice.classical import (GridSampler, all_rates, blockade_radius_R, gamma_rate,
                                  kmc_ensemble, kmc_run, rate_equation_populations,
                                  rate_generator, rate_table, run_rng)
from rydlattice.core import ClassicalConfig, LatticeModel, fock_state, occupation_string
from rydlattice.master import IntegratorSettings, build_generator, integrate_master


def test_blockade_radius_R():
    assert blockade_radius_R(0.1, 160.0) == pytest.approx(3200.0 ** (1 / 6))
    with pytest.raises(ValueError):
        blockade_radius_R(0.0, 160.0)


def test_isolated_site_flips_at_full_rate():
    model = LatticeModel(5, 160.0, 0.01, 0.1)
    table = rate_table(ClassicalConfig.from_string("ggggg", model), model)
    assert np.allclose(table.rates, 1.0)
    assert table.physical[0] == pytest.approx(4 * 0.01**2 / 0.1)


def test_neighbour_suppression_formula():
    model = LatticeModel(3, 64.0, 0.1, 2.0)
    config = ClassicalConfig.from_string("egg", model)
    radius = blockade_radius_R(2.0, 64.0)
    assert gamma_rate(config, 2, radius) == pytest.approx(1 / (1 + radius**12))
    assert gamma_rate(config, 3, radius) == pytest.approx(1 / (1 + (radius**6 / 64) ** 2))
    # a site's own occupation does not enter its rate
    assert gamma_rate(config, 1, radius) == 1.0


@given(st.integers(0, 63))
def test_vectorised_rates_match_per_site_formula(index):
    model = LatticeModel(6, 40.0, 0.05, 0.3, frozenset({(6, 0)}))
    if index & (1 << 5):
        index ^= 1 << 5
    config = ClassicalConfig.from_string(occupation_string(index, 6), model)
    assert np.allclose(all_rates(model)[index], rate_table(config, model).physical, rtol=1e-12)


def test_rate_generator_is_symmetric_and_conserves_probability():
    q = rate_generator(LatticeModel(5, 40.0, 0.05, 0.3))
    assert np.allclose(q.sum(axis=0), 0.0, atol=1e-15)
    assert np.allclose(q, q.T)


def test_rate_equation_tracks_master_equation_at_strong_dephasing():
    model = LatticeModel(4, 40.0, 0.01, 1.0)
    times = np.linspace(0.0, 2e4, 9)
    exact = integrate_master(fock_state(model, "gegg"), build_generator(model),
                             IntegratorSettings(times, method="long-time"), model=model)
    rate = rate_equation_populations(model, ClassicalConfig.from_string("gegg", model), times)
    assert np.abs(exact.populations - rate).max() < 5e-3


def test_kmc_ensemble_matches_rate_equation():
    model = LatticeModel(4, 40.0, 0.05, 0.3)
    config = ClassicalConfig.from_string("gegg", model)
    times = np.linspace(0.0, 200.0, 9)
    series = kmc_ensemble(config, model, times, 3000, seed=1)
    pops = rate_equation_populations(model, config, times)
    n_e = pops @ np.array([bin(i).count("1") for i in range(16)])
    se = np.maximum(series["N_e_se"], 1e-9)
    assert np.all(np.abs(series["N_e"] - n_e) <= 4 * se)


def test_grid_sampler_matches_rate_equation():
    model = LatticeModel(4, 40.0, 0.05, 0.3)
    config = ClassicalConfig.from_string("gegg", model)
    times = np.array([0.0, 10.0, 1e3, 1e5])
    series = kmc_ensemble(config, model, times, 3000, seed=2, method="grid")
    pops = rate_equation_populations(model, config, times)
    n_e = pops @ np.array([bin(i).count("1") for i in range(16)])
    assert np.all(np.abs(series["N_e"] - n_e) <= 4 * np.maximum(series["N_e_se"], 1e-9))


def test_grid_sampler_rows_are_distributions():
    sampler = GridSampler(LatticeModel(3, 10.0, 0.1, 0.5), np.array([0.0, 1.0, 5.0]))
    for cdf in sampler.cumulative:
        assert np.allclose(cdf[:, -1], 1.0)
        assert np.all(np.diff(cdf, axis=1) >= 0)


def test_kmc_run_is_seed_deterministic_and_respects_pins():
    model = LatticeModel(5, 40.0, 0.05, 0.3, frozenset({(5, 1)}))
    config = ClassicalConfig.from_string("gggge", model)
    times = np.linspace(0.0, 1e3, 11)
    a = kmc_run(config, model, times, run_rng(3, 0))
    b = kmc_run(config, model, times, run_rng(3, 0))
    assert np.array_equal(a["state_index"], b["state_index"])
    assert np.all(a["density"][:, 4] == 1.0)


def test_start_configuration_checks():
    model = LatticeModel(3, 10.0, 0.1, 0.5, frozenset({(3, 1)}))
    with pytest.raises(ValueError):
        kmc_ensemble(ClassicalConfig((0, 0, 0), (False, False, False)), model,
                     np.array([0.0, 1.0]), 1, 0)
    with pytest.raises(ValueError):
        kmc_ensemble(ClassicalConfig.from_string("gge", model), model, np.array([0.0, 1.0]),
                     0, 0)
    with pytest.raises(ValueError):
        kmc_ensemble(ClassicalConfig.from_string("gge", model), model, np.array([0.0, 1.0]),
                     1, 0, method="tau-leap")
    with pytest.raises(ValueError):
        all_rates(LatticeModel(3, 10.0, 0.1, 0.0))
