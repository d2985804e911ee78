"""Uniform entry point that runs any engine and returns a TimeSeries."""

from __future__ import annotations

import numpy as np

from .classical import kmc_ensemble
from .core import ClassicalConfig, LatticeModel, fock_state
from .master import IntegratorSettings, build_generator, integrate_master
from .observables import TimeSeries, series_from_populations
from .qjmc import TrajectorySettings, qjmc_ensemble

ENGINES = ("master", "qjmc", "kmc")
INITIAL_EXCITED_SITE = 5


def default_initial(n_sites: int) -> str:
    """Single excitation on site 5 (or the last site of shorter chains)."""
    site = min(INITIAL_EXCITED_SITE, n_sites)
    return "".join("e" if k == site else "g" for k in range(1, n_sites + 1))


def log_grid(model: LatticeModel, t_max: float | None = None, per_decade: int = 10
             ) -> np.ndarray:
    """t = 0 followed by log-spaced samples from 1/10 up to t_max.

    The default horizon is far beyond the slowest relaxation of an N <= 8
    chain at the matched parameters.
    """
    t_max = 1e14 if t_max is None else float(t_max)
    decades = np.log10(t_max) + 1.0
    return np.concatenate([[0.0], np.logspace(-1.0, np.log10(t_max),
                                              int(round(decades * per_decade)) + 1)])


def master_series(model: LatticeModel, initial: str, times, method: str = "long-time",
                  rtol: float = 1e-8, atol: float = 1e-10) -> TimeSeries:
    gen = build_generator(model)
    settings = IntegratorSettings(np.asarray(times, dtype=float), rtol=rtol, atol=atol,
                                  method=method)
    result = integrate_master(fock_state(model, initial), gen, settings, model=model)
    info = {k: v for k, v in result.info.items() if np.isscalar(v)}
    meta = {"engine": "master", "method": method, "gamma": model.gamma, "omega": model.omega,
            "c6": model.c6, "pinned_sites": sorted(model.pinned_sites), "initial": initial,
            "max_trace_drift": float(np.max(result.trace_drift)),
            "min_eigenvalue": float(np.nanmin(result.min_eigenvalue)), **info}
    return series_from_populations(settings.times, result.populations, model.n_sites, meta)


def run_engine(name: str, model: LatticeModel, initial: str, times, seed: int = 0,
               trajectories: int | None = None, threads: int = 1, method: str | None = None,
               **options) -> TimeSeries:
    """Dispatch to the master equation, QJMC ensemble or KMC ensemble."""
    times = np.asarray(times, dtype=float)
    if name == "master":
        return master_series(model, initial, times, method=method or "long-time", **options)
    if name == "qjmc":
        settings = TrajectorySettings(times, count=trajectories or 1000, seed=seed,
                                      threads=threads, **options)
        series = qjmc_ensemble(fock_state(model, initial), model, settings)
    elif name == "kmc":
        series = kmc_ensemble(ClassicalConfig.from_string(initial, model), model, times,
                              trajectories or 10000, seed, method=method or "gillespie",
                              **options)
    else:
        raise ValueError(f"unknown engine {name!r}; expected one of {ENGINES}")
    series.metadata["initial"] = initial
    return series
