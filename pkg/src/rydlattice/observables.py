"""Measured quantities: excitation number, site densities and correlations.

Every engine reduces to Fock-basis populations p[t, s] (diagonal of rho for
the exact engines, trajectory averages of |psi_s|^2 or configuration
histograms for the stochastic ones). The helpers here work on those arrays
so that all engines share one estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ClassicalConfig, DensityMatrix, PureState, occupation_table

CORRELATION_SITE = 5
CORRELATION_DISTANCE = 3


@dataclass
class TimeSeries:
    """Sampled channels on a common time grid plus run metadata.

    Channels are arrays whose first axis runs over the grid, either scalar
    per time or one value per site.
    """

    times: np.ndarray
    channels: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1:
            raise ValueError("time grid must be one-dimensional")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        for name, values in list(self.channels.items()):
            self.add(name, values)

    def add(self, name: str, values) -> None:
        values = np.asarray(values)
        if values.shape[:1] != self.times.shape:
            raise ValueError(f"channel {name!r} has {values.shape[:1]} samples, "
                             f"grid has {len(self.times)}")
        self.channels[name] = values

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def __contains__(self, name: str) -> bool:
        return name in self.channels

    @property
    def n_sites(self) -> int:
        return int(self.metadata["n_sites"])


def excitation_number(state) -> float:
    """Expected number of excited atoms in a density matrix, pure state or configuration."""
    if isinstance(state, ClassicalConfig):
        return float(sum(state.bits))
    if isinstance(state, DensityMatrix):
        probs = np.real(np.diag(state.entries))
    elif isinstance(state, PureState):
        probs = np.abs(state.amplitudes) ** 2
    else:
        raise TypeError(f"unsupported state type {type(state).__name__}")
    n_sites = int(round(np.log2(len(probs))))
    counts = occupation_table(n_sites).sum(axis=1)
    return float(probs @ counts)


def site_densities(populations: np.ndarray, n_sites: int) -> np.ndarray:
    """<n_k> for k = 1..N from populations of shape (..., 2^N)."""
    return np.asarray(populations) @ occupation_table(n_sites).astype(float)


def correlation_branches(n_sites: int, site: int, delta_r: int) -> list[int]:
    """Partner sites i +- delta_r that lie on the chain."""
    if not 1 <= site <= n_sites:
        raise IndexError(f"site {site} outside 1..{n_sites}")
    if delta_r == 0:
        return [site]
    partners = [site + s * abs(delta_r) for s in (-1, 1)]
    return [j for j in partners if 1 <= j <= n_sites]


def correlation_from_populations(populations: np.ndarray, n_sites: int,
                                 site: int = CORRELATION_SITE,
                                 delta_r: int = CORRELATION_DISTANCE) -> np.ndarray:
    """Connected density correlation averaged over the in-range partners.

    Both partners contribute with weight 1/2 when they exist; if one falls
    off the chain the other carries weight 1. With no partner the result is
    NaN.
    """
    pops = np.asarray(populations, dtype=float)
    occ = occupation_table(n_sites).astype(float)
    partners = correlation_branches(n_sites, site, delta_r)
    if not partners:
        return np.full(pops.shape[:-1], np.nan)
    n_i = occ[:, site - 1]
    mean_i = pops @ n_i
    total = 0.0
    for j in partners:
        n_j = occ[:, j - 1]
        total = total + pops @ (n_i * n_j) - mean_i * (pops @ n_j)
    return total / len(partners)


def two_point_correlation(rho, site: int, delta_r: int) -> float:
    """C(delta_r) around ``site`` for a density matrix or pure state."""
    if isinstance(rho, DensityMatrix):
        pops = np.real(np.diag(rho.entries))
    elif isinstance(rho, PureState):
        pops = np.abs(rho.amplitudes) ** 2
    else:
        pops = np.real(np.diag(np.asarray(rho)))
    n_sites = int(round(np.log2(len(pops))))
    return float(correlation_from_populations(pops, n_sites, site, delta_r))


def correlation_channel_name(delta_r: int = CORRELATION_DISTANCE) -> str:
    return f"C({delta_r})"


def series_from_populations(times, populations: np.ndarray, n_sites: int, metadata: dict,
                            ne_error: np.ndarray | None = None,
                            density_error: np.ndarray | None = None,
                            site: int = CORRELATION_SITE,
                            delta_r: int = CORRELATION_DISTANCE) -> TimeSeries:
    """Standard channel set shared by all engines."""
    pops = np.asarray(populations, dtype=float)
    dens = site_densities(pops, n_sites)
    n_e = dens.sum(axis=1)
    meta = dict(metadata)
    meta["n_sites"] = n_sites
    series = TimeSeries(times, {"N_e": n_e, "N_e/N": n_e / n_sites, "density": dens}, meta)
    if 1 <= site <= n_sites:
        partners = correlation_branches(n_sites, site, delta_r)
        meta["correlation"] = {"site": site, "delta_r": delta_r, "partners": partners,
                               "weight": 1.0 / len(partners) if partners else None}
        series.add(correlation_channel_name(delta_r),
                   correlation_from_populations(pops, n_sites, site, delta_r))
    if ne_error is not None:
        series.add("N_e_se", ne_error)
    if density_error is not None:
        series.add("density_se", density_error)
    return series


@dataclass
class DensityMap:
    """Per-site densities as an N x T array (row k-1 holds site k)."""

    times: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def long_form(self):
        """Rows of (t, site, value) with time varying slowest."""
        n_sites, n_times = self.values.shape
        for j in range(n_times):
            for k in range(n_sites):
                yield self.times[j], k + 1, self.values[k, j]


def site_density_map(series: TimeSeries, r_g: float | None = None) -> DensityMap:
    """Heatmap of <n_k>(t); marks sites at distance r_G from pinned sites."""
    if "density" not in series:
        raise KeyError("series does not carry per-site densities")
    values = np.asarray(series["density"], dtype=float).T.copy()
    meta = {key: series.metadata[key] for key in ("engine", "n_sites", "pinned_sites")
            if key in series.metadata}
    if r_g is not None:
        meta["r_G"] = float(r_g)
        pinned = [site for site, _ in series.metadata.get("pinned_sites", [])]
        meta["r_G_markers"] = sorted({p + s * r_g for p in pinned for s in (-1, 1)
                                      if 0.5 <= p + s * r_g <= series.n_sites + 0.5})
    return DensityMap(series.times.copy(), values, meta)
