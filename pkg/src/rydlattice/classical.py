"""Strong-dephasing limit: classical spin flips with configuration-dependent rates.

Site k flips (in either direction) at rate (4 Omega^2 / gamma) Gamma_k with
Gamma_k^-1 = 1 + (R^6 sum_{m != k} n_m / |k - m|^6)^2 and R = (2 C6 / gamma)^(1/6).
Pinned sites never flip but still block their neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ClassicalConfig, LatticeModel, occupation_table
from .observables import TimeSeries, series_from_populations

KMC_METHODS = ("gillespie", "grid")
DEFAULT_EVENT_BUDGET = 10**9


def blockade_radius_R(gamma: float, c6: float) -> float:
    """Dissipative blockade radius (2 C6 / gamma)^(1/6)."""
    if not (gamma > 0 and c6 > 0):
        raise ValueError(f"gamma and c6 must be positive, got {gamma}, {c6}")
    return (2.0 * c6 / gamma) ** (1.0 / 6.0)


def rate_prefactor(model: LatticeModel) -> float:
    return 4.0 * model.omega**2 / model.gamma


def gamma_rate(config: ClassicalConfig, site: int, radius: float) -> float:
    """Dimensionless flip rate Gamma_k in (0, 1]; the site itself is left out of the sum."""
    n_sites = len(config.bits)
    if not 1 <= site <= n_sites:
        raise IndexError(f"site {site} outside 1..{n_sites}")
    field = sum(config.bits[m - 1] / abs(site - m) ** 6
                for m in range(1, n_sites + 1) if m != site)
    return 1.0 / (1.0 + (radius**6 * field) ** 2)


@dataclass(frozen=True)
class RateTable:
    """Per-site rates in units of 4 Omega^2 / gamma (zero for pinned sites)."""

    rates: np.ndarray
    prefactor: float

    @property
    def total(self) -> float:
        return float(self.rates.sum())

    @property
    def physical(self) -> np.ndarray:
        return self.prefactor * self.rates


def rate_table(config: ClassicalConfig, model: LatticeModel) -> RateTable:
    radius = blockade_radius_R(model.gamma, model.c6)
    rates = np.array([0.0 if config.pinned_mask[k - 1] else gamma_rate(config, k, radius)
                      for k in range(1, model.n_sites + 1)])
    return RateTable(rates, rate_prefactor(model))


def all_rates(model: LatticeModel) -> np.ndarray:
    """Physical flip rates for every configuration, shape (2^N, N)."""
    if not model.gamma > 0:
        raise ValueError("the classical limit needs gamma > 0")
    n = model.n_sites
    occ = occupation_table(n).astype(float)
    sites = np.arange(1, n + 1)
    dist = np.abs(sites[:, None] - sites[None, :]).astype(float)
    coupling = np.zeros_like(dist)
    np.divide(1.0, dist**6, out=coupling, where=dist > 0)
    field = occ @ coupling
    radius6 = 2.0 * model.c6 / model.gamma
    rates = rate_prefactor(model) / (1.0 + (radius6 * field) ** 2)
    for site, _ in model.pinned_sites:
        rates[:, site - 1] = 0.0
    return np.ascontiguousarray(rates)


def rate_generator(model: LatticeModel) -> np.ndarray:
    """Dense generator Q of the configuration Markov chain (columns sum to zero).

    dp/dt = Q p for the configuration distribution p.
    """
    rates = all_rates(model)
    dim = model.dim
    q = np.zeros((dim, dim))
    idx = np.arange(dim)
    for k in range(model.n_sites):
        q[idx ^ (1 << k), idx] += rates[:, k]
    q[idx, idx] -= rates.sum(axis=1)
    return q


def rate_equation_populations(model: LatticeModel, config0: ClassicalConfig,
                              times: np.ndarray) -> np.ndarray:
    """Exact configuration distribution of the rate equation at the given times."""
    q = rate_generator(model)
    # The rate of flipping site k does not depend on n_k, so Q is symmetric.
    evals, evecs = np.linalg.eigh(q)
    p0 = np.zeros(model.dim)
    p0[config0.index] = 1.0
    coef = evecs.T @ p0
    pops = np.array([evecs @ (np.exp(evals * t) * coef) for t in times])
    return np.clip(pops, 0.0, None)


def _check_start(config0: ClassicalConfig, model: LatticeModel) -> int:
    if len(config0.bits) != model.n_sites:
        raise ValueError("configuration length does not match the model")
    for site, level in model.pinned_sites:
        if config0.bits[site - 1] != level:
            raise ValueError(f"site {site} is pinned to level {level}")
    return config0.index


def kmc_run(config0: ClassicalConfig, model: LatticeModel, times, rng: np.random.Generator,
            max_events: int = DEFAULT_EVENT_BUDGET, rates: np.ndarray | None = None
            ) -> TimeSeries:
    """Single Gillespie run sampled on the time grid."""
    times = np.asarray(times, dtype=float)
    state0 = _check_start(config0, model)
    table = all_rates(model) if rates is None else rates
    states, events = kernels.kmc_sample(state0, table, table.sum(axis=1), times, rng,
                                        max_events)
    pops = np.zeros((len(times), model.dim))
    pops[np.arange(len(times)), states] = 1.0
    meta = {"engine": "kmc-run", "gamma": model.gamma, "omega": model.omega, "c6": model.c6,
            "pinned_sites": sorted(model.pinned_sites), "events": int(events)}
    series = series_from_populations(times, pops, model.n_sites, meta)
    series.add("state_index", states)
    return series


class GridSampler:
    """Exact sampling of the chain at the grid times from transition matrices.

    Equivalent in distribution to Gillespie sampled on the grid, with a cost
    independent of the number of flips between grid points.
    """

    def __init__(self, model: LatticeModel, times: np.ndarray):
        q = rate_generator(model)
        evals, evecs = np.linalg.eigh(q)
        steps = np.diff(np.concatenate([[0.0], times]))
        cumulative = []
        for dt in steps:
            trans = evecs @ (np.exp(evals * dt)[:, None] * evecs.T)
            trans = np.clip(trans, 0.0, None)
            # column j holds the distribution of the next state given state j
            cdf = np.cumsum(trans, axis=0)
            cdf /= cdf[-1:, :]
            cumulative.append(np.ascontiguousarray(cdf.T))
        self.cumulative = cumulative

    def sample(self, state0: int, rng: np.random.Generator) -> np.ndarray:
        draws = rng.random(len(self.cumulative))
        states = np.empty(len(self.cumulative), dtype=np.int64)
        state = state0
        for g, (cdf, u) in enumerate(zip(self.cumulative, draws)):
            state = int(min(np.searchsorted(cdf[state], u, side="right"), len(cdf) - 1))
            states[g] = state
        return states


def run_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def kmc_ensemble(config0: ClassicalConfig, model: LatticeModel, times, count: int, seed: int,
                 method: str = "gillespie", max_events: int = DEFAULT_EVENT_BUDGET
                 ) -> TimeSeries:
    """Average of ``count`` independent runs; run i uses SeedSequence([seed, i])."""
    if count < 1:
        raise ValueError(f"run count must be at least 1, got {count}")
    if method not in KMC_METHODS:
        raise ValueError(f"method must be one of {KMC_METHODS}")
    times = np.asarray(times, dtype=float)
    state0 = _check_start(config0, model)
    occ = occupation_table(model.n_sites).astype(float)
    counts = np.zeros((len(times), model.dim))
    ne_sum = np.zeros(len(times))
    ne_sq = np.zeros(len(times))
    events = 0
    if method == "gillespie":
        table = all_rates(model)
        totals = table.sum(axis=1)
    else:
        sampler = GridSampler(model, times)
    rows = np.arange(len(times))
    for index in range(count):
        rng = run_rng(seed, index)
        if method == "gillespie":
            states, n_ev = kernels.kmc_sample(state0, table, totals, times, rng, max_events)
            events += int(n_ev)
        else:
            states = sampler.sample(state0, rng)
        counts[rows, states] += 1.0
        n_e = occ[states].sum(axis=1)
        ne_sum += n_e
        ne_sq += n_e**2
    meta = {"engine": "kmc", "method": method, "gamma": model.gamma, "omega": model.omega,
            "c6": model.c6, "pinned_sites": sorted(model.pinned_sites), "seed": seed,
            "trajectories": count, "mean_events": events / count if method == "gillespie"
            else None, "blockade_radius_R": blockade_radius_R(model.gamma, model.c6)}
    ne_se = None
    if count >= 2:
        mean = ne_sum / count
        ne_se = np.sqrt(np.maximum(ne_sq / count - mean**2, 0.0) / (count - 1))
    return series_from_populations(times, counts / count, model.n_sites, meta, ne_error=ne_se)
