"""Quantum-jump Monte Carlo unraveling of the dephasing master equation.

Between jumps the state evolves under H_eff = H - (i gamma / 2) sum_k n_k.
H_eff is diagonalised once per model, so the no-jump evolution is exact at
any time and the jump time (||psi||^2 reaching a uniform random target) is
located by a safeguarded Newton iteration on the exact norm.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels
from .core import LatticeModel, PureState, STATE_TOL, occupation_table
from .hamiltonian import build_hamiltonian, driven_site_masks
from .observables import TimeSeries, series_from_populations

logger = logging.getLogger(__name__)

RECORD_MODES = ("observables", "full")
EIGEN_RECON_TOL = 1e-8
BATCH_SIZE = 50


@dataclass(frozen=True)
class TrajectorySettings:
    times: np.ndarray
    count: int = 1000
    seed: int = 0
    t_tol: float = 1e-8
    record: str = "full"
    max_jumps: int = 10_000_000
    threads: int = 1

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if self.count < 1:
            raise ValueError(f"trajectory count must be at least 1, got {self.count}")
        if times.ndim != 1 or len(times) == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
            raise ValueError("output grid must be non-negative and strictly increasing")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not self.t_tol > 0:
            raise ValueError("jump-time tolerance must be positive")
        if self.record not in RECORD_MODES:
            raise ValueError(f"record mode must be one of {RECORD_MODES}")
        if self.threads < 1:
            raise ValueError("thread count must be at least 1")


@dataclass(frozen=True)
class JumpRecord:
    time: float
    site: int


class TrajectoryError(RuntimeError):
    def __init__(self, message: str, index: int):
        super().__init__(f"trajectory {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class NoJumpPropagator:
    """Eigen-decomposition of H_eff shared by all trajectories of a model."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    inverse: np.ndarray
    excitation: np.ndarray
    masks: np.ndarray
    gamma: float
    free_sites: tuple = field(default=())

    @classmethod
    def from_model(cls, model: LatticeModel) -> "NoJumpPropagator":
        ham = build_hamiltonian(model).matrix
        masks = driven_site_masks(model)
        free_mask = int(np.bitwise_or.reduce(masks)) if len(masks) else 0
        excitation = occupation_table(model.n_sites)[:, [k - 1 for k in model.free_sites]]
        excitation = excitation.sum(axis=1).astype(float)
        if model.gamma == 0 or free_mask == 0:
            lam, vecs = np.linalg.eigh(ham)
            lam = lam.astype(complex)
            vecs = vecs.astype(complex)
            inv = vecs.conj().T
        else:
            heff = ham - 0.5j * model.gamma * np.diag(excitation)
            lam, vecs = sla.eig(heff)
            inv = np.linalg.inv(vecs)
            recon = np.abs((vecs * lam) @ inv - heff).max()
            if recon > EIGEN_RECON_TOL * max(1.0, np.abs(heff).max()):
                raise np.linalg.LinAlgError(
                    f"H_eff eigen-decomposition too inaccurate (residual {recon:.2e})")
        return cls(lam, vecs, inv, excitation, masks, float(model.gamma),
                   tuple(model.free_sites))

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        """Unnormalised no-jump state after time t."""
        return self.vectors @ (np.exp(-1j * self.eigenvalues * t) * (self.inverse @ psi))


def _check_initial(psi0, model: LatticeModel) -> np.ndarray:
    amps = psi0.amplitudes if isinstance(psi0, PureState) else np.asarray(psi0, dtype=complex)
    if amps.shape != (model.dim,):
        raise ValueError(f"state has dimension {amps.shape}, model needs {model.dim}")
    norm = float(np.vdot(amps, amps).real)
    if abs(norm - 1.0) > STATE_TOL:
        raise ValueError(f"initial state not normalised (norm^2 = {norm:.12g})")
    return np.ascontiguousarray(amps, dtype=complex)


def _run(psi, prop: NoJumpPropagator, settings: TrajectorySettings, rng, index: int):
    try:
        states, times, sites = kernels.qjmc_propagate(
            psi, prop.eigenvalues, prop.vectors, prop.inverse, prop.excitation, prop.masks,
            prop.gamma, settings.times, rng, settings.t_tol, settings.max_jumps)
    except RuntimeError as exc:
        raise TrajectoryError(str(exc), index) from exc
    jumps = [JumpRecord(float(t), int(prop.free_sites[s])) for t, s in zip(times, sites)]
    return np.abs(states) ** 2, jumps


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` of an ensemble seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def qjmc_trajectory(psi0, model: LatticeModel, settings: TrajectorySettings,
                    rng: np.random.Generator, propagator: NoJumpPropagator | None = None
                    ) -> tuple[TimeSeries, list[JumpRecord]]:
    """One trajectory; channels are computed from the normalised state."""
    psi = _check_initial(psi0, model)
    prop = propagator or NoJumpPropagator.from_model(model)
    pops, jumps = _run(psi, prop, settings, rng, 0)
    meta = {"engine": "qjmc-trajectory", "gamma": model.gamma, "omega": model.omega,
            "c6": model.c6, "pinned_sites": sorted(model.pinned_sites), "jumps": len(jumps)}
    series = series_from_populations(settings.times, pops, model.n_sites, meta)
    return series, jumps


@dataclass
class _Accumulator:
    populations: np.ndarray
    ne_sum: np.ndarray
    ne_sq: np.ndarray
    dens_sum: np.ndarray
    dens_sq: np.ndarray
    jumps: int = 0


def _batch(indices, psi, prop, settings, n_sites):
    occ = occupation_table(n_sites).astype(float)
    n_t = len(settings.times)
    acc = _Accumulator(np.zeros((n_t, len(psi))), np.zeros(n_t), np.zeros(n_t),
                       np.zeros((n_t, n_sites)), np.zeros((n_t, n_sites)))
    for index in indices:
        pops, jumps = _run(psi, prop, settings, trajectory_rng(settings.seed, index), index)
        dens = pops @ occ
        n_e = dens.sum(axis=1)
        acc.populations += pops
        acc.ne_sum += n_e
        acc.ne_sq += n_e**2
        acc.dens_sum += dens
        acc.dens_sq += dens**2
        acc.jumps += len(jumps)
    return acc


def _standard_error(total, total_sq, count):
    mean = total / count
    var = np.maximum(total_sq / count - mean**2, 0.0) * count / (count - 1)
    return np.sqrt(var / count)


def qjmc_ensemble(psi0, model: LatticeModel, settings: TrajectorySettings) -> TimeSeries:
    """Trajectory average of all channels with standard errors of N_e and densities.

    Trajectory i draws from SeedSequence([seed, i]); fixed-size batches are summed
    in index order, so the result does not depend on the thread count.
    """
    psi = _check_initial(psi0, model)
    prop = NoJumpPropagator.from_model(model)
    count = settings.count
    chunks = [range(start, min(start + BATCH_SIZE, count))
              for start in range(0, count, BATCH_SIZE)]
    if settings.threads > 1:
        with ThreadPoolExecutor(settings.threads) as pool:
            parts = list(pool.map(lambda c: _batch(c, psi, prop, settings, model.n_sites),
                                  chunks))
    else:
        parts = [_batch(c, psi, prop, settings, model.n_sites) for c in chunks]
    total = parts[0]
    for part in parts[1:]:
        total.populations += part.populations
        total.ne_sum += part.ne_sum
        total.ne_sq += part.ne_sq
        total.dens_sum += part.dens_sum
        total.dens_sq += part.dens_sq
        total.jumps += part.jumps
    meta = {"engine": "qjmc", "gamma": model.gamma, "omega": model.omega, "c6": model.c6,
            "pinned_sites": sorted(model.pinned_sites), "seed": settings.seed,
            "trajectories": count, "mean_jumps": total.jumps / count}
    ne_se = dens_se = None
    if count >= 2:
        ne_se = _standard_error(total.ne_sum, total.ne_sq, count)
        if settings.record == "full":
            dens_se = _standard_error(total.dens_sum, total.dens_sq, count)
    series = series_from_populations(settings.times, total.populations / count, model.n_sites,
                                     meta, ne_error=ne_se, density_error=dens_se)
    if settings.record == "observables":
        del series.channels["density"]
    return series
