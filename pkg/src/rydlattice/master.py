"""Lindblad dynamics with pure-dephasing jump operators sqrt(gamma) n_k.

In the Fock-pair basis the dissipator is diagonal: element (i, j) decays at
rate gamma/2 times the number of dephased sites on which i and j differ. The
generator is therefore stored as that diagonal (together with the interaction
energy differences) plus the bit-flip drive, and never as a dim^2 x dim^2
superoperator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45, simpson

from . import kernels
from .core import (DensityMatrix, LatticeModel, check_density_size, excitation_count,
                   pinned_index_mask)
from .hamiltonian import HamiltonianMatrix, build_hamiltonian

logger = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Raised when an integrator cannot reach the requested time."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(f"{message} (reached t = {t_reached:.6g})")
        self.t_reached = t_reached


@dataclass(frozen=True)
class LindbladGenerator:
    hamiltonian: HamiltonianMatrix
    gamma: float
    jump_masks: np.ndarray
    diagonal: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @property
    def omega(self) -> float:
        return self.hamiltonian.omega

    def apply(self, rho: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        rho = np.ascontiguousarray(rho, dtype=complex)
        if out is None:
            out = np.empty_like(rho)
        return kernels.liouvillian_apply(rho, self.diagonal, self.hamiltonian.flip_masks,
                                         float(self.omega), out)

    def jump_operators(self) -> list[np.ndarray]:
        idx = np.arange(self.dim)
        scale = math.sqrt(self.gamma)
        return [np.diag(scale * ((idx & int(m)) != 0).astype(float)) for m in self.jump_masks]


def hamming_table(dim: int, masks: np.ndarray) -> np.ndarray:
    """Number of bits from ``masks`` on which basis indices i and j differ."""
    idx = np.arange(dim)
    diff = idx[:, None] ^ idx[None, :]
    table = np.zeros((dim, dim))
    for m in masks:
        table += (diff & int(m)) != 0
    return table


def build_generator(model: LatticeModel, hamiltonian: HamiltonianMatrix | None = None
                    ) -> LindbladGenerator:
    check_density_size(model)
    ham = hamiltonian if hamiltonian is not None else build_hamiltonian(model)
    energy = ham.diagonal
    masks = ham.flip_masks
    diag = -1j * (energy[:, None] - energy[None, :]) - 0.5 * model.gamma * hamming_table(
        model.dim, masks)
    diag = np.ascontiguousarray(diag)
    diag.setflags(write=False)
    return LindbladGenerator(ham, float(model.gamma), masks, diag)


def lindblad_rhs(rho: DensityMatrix | np.ndarray, gen: LindbladGenerator) -> np.ndarray:
    """-i[H, rho] + gamma sum_k (n_k rho n_k - {n_k, rho}/2)."""
    entries = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if entries.shape != (gen.dim, gen.dim):
        raise ValueError(f"density matrix shape {entries.shape} does not match dim {gen.dim}")
    return gen.apply(entries)


def stationary_state(model: LatticeModel) -> np.ndarray:
    """Uniform mixture over configurations compatible with the pinned levels."""
    mask, value = pinned_index_mask(model)
    idx = np.arange(model.dim)
    weights = ((idx & mask) == value).astype(float)
    return np.diag(weights / weights.sum()).astype(complex)


@dataclass
class IntegratorSettings:
    """Controls for :func:`integrate_master`.

    ``method`` is ``"rk45"`` for the adaptive embedded Runge-Kutta 4(5)
    integrator or ``"long-time"`` for the exponential/Krylov propagator in
    :mod:`rydlattice.longtime`, which reaches stationarity at N = 8.
    """

    times: np.ndarray
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf
    method: str = "rk45"
    track_spectrum: bool = True
    keep_states: bool = False
    krylov_tol: float = 1e-7
    krylov_max_dim: int = 600
    switch_time: float | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("time grid must be a non-empty 1D array")
        if times[0] < 0 or np.any(np.diff(times) <= 0):
            raise ValueError("time grid must be strictly increasing from t >= 0")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.method not in ("rk45", "long-time"):
            raise ValueError(f"unknown integration method {self.method!r}")
        self.times = times


@dataclass
class MasterResult:
    """Snapshots of a density-matrix run reduced to diagonal populations.

    ``trace_drift`` and ``min_eigenvalue`` are recorded per output time.
    """

    times: np.ndarray
    populations: np.ndarray
    trace_drift: np.ndarray
    min_eigenvalue: np.ndarray
    hermiticity_error: np.ndarray
    states: list | None = None
    info: dict = field(default_factory=dict)


class _Recorder:
    def __init__(self, settings: IntegratorSettings, dim: int):
        n = len(settings.times)
        self.settings = settings
        self.populations = np.empty((n, dim))
        self.trace_drift = np.empty(n)
        self.min_eig = np.full(n, np.nan)
        self.herm = np.empty(n)
        self.states = [] if settings.keep_states else None

    def record(self, k: int, rho: np.ndarray) -> None:
        self.herm[k] = float(np.abs(rho - rho.conj().T).max())
        rho = 0.5 * (rho + rho.conj().T)
        diag = np.real(np.diagonal(rho))
        self.populations[k] = diag
        self.trace_drift[k] = abs(diag.sum() - 1.0)
        if self.settings.track_spectrum:
            self.min_eig[k] = float(np.linalg.eigvalsh(rho)[0])
        if self.states is not None:
            self.states.append(DensityMatrix(rho))

    def result(self, info: dict) -> MasterResult:
        return MasterResult(self.settings.times, self.populations, self.trace_drift,
                            self.min_eig, self.herm, self.states, info)


def _as_density(rho0) -> np.ndarray:
    if isinstance(rho0, DensityMatrix):
        return np.array(rho0.entries, dtype=complex)
    if hasattr(rho0, "to_density"):
        return np.array(rho0.to_density().entries, dtype=complex)
    return np.array(rho0, dtype=complex)


def integrate_master(rho0, gen: LindbladGenerator, settings: IntegratorSettings,
                     model: LatticeModel | None = None) -> MasterResult:
    """Propagate ``rho0`` and record snapshots on ``settings.times``."""
    rho = _as_density(rho0)
    if rho.shape != (gen.dim, gen.dim):
        raise ValueError(f"initial state shape {rho.shape} does not match dim {gen.dim}")
    DensityMatrix(rho).validate()
    if settings.method == "long-time":
        from .longtime import propagate_long_time

        if model is None:
            raise ValueError("the long-time propagator needs the lattice model")
        return propagate_long_time(rho, gen, settings, model)
    return _integrate_rk45(rho, gen, settings)


def _integrate_rk45(rho: np.ndarray, gen: LindbladGenerator, settings: IntegratorSettings
                    ) -> MasterResult:
    dim = gen.dim
    times = settings.times
    rec = _Recorder(settings, dim)
    work = np.empty((dim, dim), dtype=complex)

    def rhs(_t, y):
        return gen.apply(y.reshape(dim, dim), work).ravel().copy()

    k = 0
    while k < len(times) and times[k] <= 0.0:
        rec.record(k, rho)
        k += 1
    if k == len(times):
        return rec.result({"method": "rk45", "steps": 0})
    solver = RK45(rhs, 0.0, rho.ravel(), float(times[-1]), rtol=settings.rtol,
                  atol=settings.atol, max_step=settings.max_step)
    steps = 0
    while k < len(times):
        message = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"RK45 failed: {message}", solver.t)
        steps += 1
        y = solver.y.reshape(dim, dim)
        # post-step symmetrisation; the stored derivative stays valid to roundoff
        y[...] = 0.5 * (y + y.conj().T)
        if k < len(times) and times[k] <= solver.t:
            dense = solver.dense_output()
            while k < len(times) and times[k] <= solver.t:
                snap = y if times[k] == solver.t else dense(times[k]).reshape(dim, dim)
                rec.record(k, np.array(snap))
                k += 1
    return rec.result({"method": "rk45", "steps": steps})


def two_atom_generator(omega: float, gamma: float, c6: float, r: float) -> np.ndarray:
    """Generator of the Bloch vector (rho_ee, Re rho_ge, Im rho_ge) plus constant drive.

    The state is x = (p, u, v) with p = rho_ee and rho_ge = u + i v. The
    affine system dx/dt = A x + b is returned as a 4x4 augmented matrix.
    """
    if not r > 0:
        raise ValueError(f"distance must be positive, got {r}")
    delta = c6 / r**6
    # H = [[0, omega], [omega, delta]] with |g> first; the dephasing acts on
    # rho_ge at rate gamma / 2.
    a = np.zeros((4, 4))
    # dp/dt = 2 omega Im(rho_ge)
    a[0, 2] = 2.0 * omega
    # d rho_ge / dt = -i (omega (rho_ee - rho_gg) - delta rho_ge) - gamma/2 rho_ge
    #               = -i omega (2p - 1) + i delta rho_ge - gamma/2 rho_ge
    a[1, 1] = -0.5 * gamma
    a[1, 2] = -delta
    a[2, 2] = -0.5 * gamma
    a[2, 1] = delta
    a[2, 0] = -2.0 * omega
    a[2, 3] = omega
    return a


def integrate_two_atom(omega: float, gamma: float, c6: float, r: float, times,
                       method: str = "exact", rtol: float = 1e-8, atol: float = 1e-10
                       ) -> np.ndarray:
    """<n(t, r)> for one driven atom next to an excited partner, from |g><g|.

    ``method="exact"`` uses the matrix exponential of the three-component Bloch
    generator; ``method="rk45"`` integrates the 2x2 density matrix with the
    same adaptive scheme as :func:`integrate_master`.
    """
    times = np.asarray(times, dtype=float)
    if method == "exact":
        from scipy.linalg import expm

        a = two_atom_generator(omega, gamma, c6, r)
        x0 = np.array([0.0, 0.0, 0.0, 1.0])
        out = np.empty(len(times))
        if len(times) > 2 and np.allclose(np.diff(times), times[1] - times[0], rtol=1e-12,
                                          atol=0.0) and times[0] == 0.0:
            step = expm(a * (times[1] - times[0]))
            x = x0
            for k in range(len(times)):
                out[k] = x[0]
                x = step @ x
            return out
        for k, t in enumerate(times):
            out[k] = (expm(a * t) @ x0)[0]
        return out
    if method != "rk45":
        raise ValueError(f"unknown method {method!r}")
    from .hamiltonian import build_two_atom_hamiltonian

    h = build_two_atom_hamiltonian(omega, c6, r)
    n_op = np.diag([0.0, 1.0])

    def rhs(_t, y):
        rho = y.reshape(2, 2)
        comm = -1j * (h @ rho - rho @ h)
        diss = gamma * (n_op @ rho @ n_op - 0.5 * (n_op @ rho + rho @ n_op))
        return (comm + diss).ravel()

    rho0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    solver = RK45(rhs, 0.0, rho0.ravel(), float(times[-1]), rtol=rtol, atol=atol)
    out = np.empty(len(times))
    k = 0
    while k < len(times) and times[k] <= 0.0:
        out[k] = 0.0
        k += 1
    while k < len(times):
        solver.step()
        if solver.status == "failed":
            raise IntegrationError("RK45 failed in two-atom integration", solver.t)
        dense = solver.dense_output()
        while k < len(times) and times[k] <= solver.t:
            out[k] = dense(times[k]).reshape(2, 2)[1, 1].real
            k += 1
    return out


def rabi_average(values: np.ndarray, times: np.ndarray, omega: float) -> float:
    """Omega times the Simpson integral of ``values`` over ``times``."""
    return float(omega * simpson(values, x=times))


def total_excitation(model: LatticeModel) -> np.ndarray:
    """Excitation count per basis index, pinned sites included."""
    return excitation_count(model.n_sites)
