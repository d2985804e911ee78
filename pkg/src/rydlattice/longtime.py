"""Propagation of the master equation to stationarity.

Explicit Runge-Kutta stepping is limited by the interaction energies
(dt ~ 1/C6) while the slowest relaxation rates at N = 8 are below 1e-10, so
reaching the stationary state needs a different scheme:

* ``gamma == 0``: exact unitary evolution in the eigenbasis of H.
* early times: Strang splitting into exact unitary evolution and exact
  dephasing. Each factor is a quantum channel, so positivity and trace are
  kept to rounding, and the step is set by gamma * Omega rather than C6.
* late times: once the fast coherences have decayed, rho(t) - rho_st lies
  close to a low-dimensional invariant subspace. A rational Krylov basis built
  from resolvent solves (sigma - L)^-1 with log-spaced real shifts captures it,
  and the Galerkin projection of L onto that basis is exponentiated exactly
  at every output time. Basis vectors are traceless Hermitian matrices packed
  as real vectors, so the projection is real.

Resolvent solves use GMRES preconditioned by an incomplete block
elimination over Hamming shells of Fock pairs, with the population block
solved exactly.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import kernels
from .core import LatticeModel
from .master import (IntegrationError, IntegratorSettings, LindbladGenerator, MasterResult,
                     _Recorder, hamming_table, stationary_state)

logger = logging.getLogger(__name__)

SWITCH_DECAY = 20.0
SPLIT_STEP_SCALE = 0.0063
SPLIT_STEP_CAP = 0.02
CHECK_EVERY = 10


# exact unitary evolution ------------------------------------------------------

def _propagate_unitary(rho, gen, settings):
    energy, vecs = np.linalg.eigh(gen.hamiltonian.matrix)
    rho_e = vecs.T @ rho @ vecs
    rec = _Recorder(settings, gen.dim)
    for k, t in enumerate(settings.times):
        # per-level phases keep the update an exact conjugation at very long times
        phase = np.exp(-1j * np.mod(energy * t, 2 * np.pi))
        rec.record(k, vecs @ (rho_e * np.outer(phase, phase.conj())) @ vecs.T)
    return rec.result({"method": "long-time", "phase": "unitary"})


# split-step propagation --------------------------------------------------------

class SplitStepper:
    """Strang splitting of the generator into Hamiltonian and dephasing parts.

    Both factors are applied exactly: the unitary through the eigenbasis of
    H and the dephasing as an elementwise decay in the Fock-pair basis. Each
    factor is completely positive and trace preserving, so the iterates stay
    physical states for any step. The interaction energies commute with the
    dephasing, so the splitting error scales with gamma * Omega rather than C6.
    """

    def __init__(self, gen: LindbladGenerator):
        self.energy, self.vecs = np.linalg.eigh(gen.hamiltonian.matrix)
        self.decay_rate = np.asarray(gen.diagonal).real
        self._cache: dict = {}

    def _factors(self, h: float):
        key = float(h)
        if key not in self._cache:
            if len(self._cache) > 4:
                self._cache.clear()
            full = (self.vecs * np.exp(-1j * self.energy * h)) @ self.vecs.T
            half = (self.vecs * np.exp(-0.5j * self.energy * h)) @ self.vecs.T
            self._cache[key] = (full, half, np.exp(self.decay_rate * h))
        return self._cache[key]

    def advance(self, rho: np.ndarray, duration: float, h_max: float) -> np.ndarray:
        if duration <= 0:
            return rho
        steps = max(1, math.ceil(duration / h_max - 1e-12))
        full, half, decay = self._factors(duration / steps)
        rho = half @ rho @ half.conj().T
        for i in range(steps):
            rho = decay * rho
            u = half if i == steps - 1 else full
            rho = u @ rho @ u.conj().T
        return 0.5 * (rho + rho.conj().T)


def split_step_limit(gen: LindbladGenerator, scale: float = SPLIT_STEP_SCALE) -> float:
    """Step giving a splitting error near 1e-7 in the populations."""
    rate = gen.gamma * gen.omega * max(1, len(gen.hamiltonian.flip_masks))
    limit = math.inf if rate == 0 else scale / math.sqrt(rate)
    return min(limit, SPLIT_STEP_CAP / gen.omega) if gen.omega > 0 else limit


class HermitianPacker:
    """Isometry between d x d Hermitian matrices and real vectors of length d^2."""

    def __init__(self, dim: int):
        self.dim = dim
        self.iu = np.triu_indices(dim, 1)
        self.n_off = len(self.iu[0])
        self.root2 = math.sqrt(2.0)

    def pack(self, mat: np.ndarray) -> np.ndarray:
        d = self.dim
        out = np.empty(d * d)
        out[:d] = np.real(np.diagonal(mat))
        upper = mat[self.iu]
        out[d:d + self.n_off] = self.root2 * upper.real
        out[d + self.n_off:] = self.root2 * upper.imag
        return out

    def unpack(self, vec: np.ndarray) -> np.ndarray:
        d = self.dim
        mat = np.zeros((d, d), dtype=complex)
        upper = (vec[d:d + self.n_off] + 1j * vec[d + self.n_off:]) / self.root2
        mat[self.iu] = upper
        mat = mat + mat.conj().T
        mat[np.diag_indices(d)] = vec[:d]
        return mat


# resolvent solves --------------------------------------------------------------

class ShellOrdering:
    """Fock pairs grouped by the Hamming distance between their two indices.

    The drive changes that distance by exactly one, so (sigma - L) is block
    tridiagonal over these shells with diagonal blocks.
    """

    def __init__(self, dim: int):
        idx = np.arange(dim)
        dist = hamming_table(dim, np.array([1 << k for k in range(max(1, dim.bit_length() - 1))],
                                           dtype=np.int64)).ravel().astype(np.int64)
        order = np.argsort(-dist, kind="stable").astype(np.int64)
        counts = np.bincount(dist)[::-1]
        self.order = order
        self.bounds = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.populations = idx * (dim + 1)


class ShellPreconditioner:
    """Approximate inverse of (sigma - L) by incomplete block elimination over shells.

    Each shell's diagonal is dressed with omega^2 / S of its outward
    neighbours (couplings between pairs of the same shell are dropped). The
    populations are then solved exactly through their d x d Schur complement,
    and coherences are recovered shell by shell moving outward.
    """

    def __init__(self, gen: LindbladGenerator, sigma: float, shells: ShellOrdering,
                 penalty: np.ndarray | None = None):
        d = gen.dim
        self.d = d
        self.omega = float(gen.omega)
        self.masks = np.ascontiguousarray(gen.hamiltonian.flip_masks, dtype=np.int64)
        self.shells = shells
        shifted = sigma - np.asarray(gen.diagonal)
        self.inv_s = kernels.shell_dress(shifted, shells.order, shells.bounds, self.masks,
                                         self.omega)
        idx = np.arange(d)
        w = 1j * self.omega
        schur = sigma * np.eye(d, dtype=complex)
        for m in self.masks:
            f = idx ^ int(m)
            inv_l = self.inv_s[f, idx]
            inv_r = self.inv_s[idx, f]
            # coherence (i^m, i) couples to population i with +i omega and to
            # population i^m with -i omega; (i, i^m) with the opposite signs
            schur[idx, idx] -= (w * w) * inv_l + (w * w) * inv_r
            schur[idx, f] -= -(w * w) * inv_l - (w * w) * inv_r
        if penalty is not None:
            # rank-one trace term of the operator restricted to populations
            schur += np.outer(penalty, np.ones(d))
        self.lu = sla.lu_factor(schur)

    def __call__(self, vec: np.ndarray) -> np.ndarray:
        d = self.d
        sh = self.shells
        b = np.array(vec, dtype=complex).reshape(d, d)
        kernels.shell_forward(b, sh.order, sh.bounds, self.masks, self.omega, self.inv_s)
        x = np.empty_like(b)
        x.reshape(-1)[sh.populations] = sla.lu_solve(self.lu, b.reshape(-1)[sh.populations])
        kernels.shell_backward(x, b, sh.order, sh.bounds[:-1], self.masks, self.omega,
                               self.inv_s)
        return x.ravel()


class ResolventSolver:
    """GMRES for (sigma - L) x = b with traceless b.

    The operator carries an extra rank-one term gamma tr(x) rho_st that leaves
    the (traceless) solution unchanged but lifts the eigenvalue sigma of the
    stationary direction, which otherwise makes tiny shifts ill-conditioned.
    """

    def __init__(self, gen: LindbladGenerator, rho_st: np.ndarray, rtol: float = 1e-9,
                 restart: int = 100, maxiter: int = 6):
        self.gen = gen
        self.penalty = gen.gamma * np.asarray(rho_st).ravel()
        self.rtol = rtol
        self.restart = restart
        self.maxiter = maxiter
        self._pcs: dict = {}
        self._shells = ShellOrdering(gen.dim)
        self.iterations = 0
        self.solves = 0
        d = gen.dim
        self._work = np.empty((d, d), dtype=complex)

    def _preconditioner(self, sigma):
        if sigma not in self._pcs:
            d = self.gen.dim
            self._pcs[sigma] = ShellPreconditioner(
                self.gen, sigma, self._shells, self.penalty[np.arange(d) * (d + 1)])
        return self._pcs[sigma]

    def solve(self, sigma: float, rhs: np.ndarray) -> np.ndarray:
        d = self.gen.dim
        n = d * d
        gen = self.gen
        work = self._work

        diag_pos = np.arange(d) * (d + 1)
        penalty = self.penalty

        def matvec(x):
            out = sigma * x - gen.apply(x.reshape(d, d), work).ravel()
            out += x[diag_pos].sum() * penalty
            return out

        op = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
        pc = spla.LinearOperator((n, n), matvec=self._preconditioner(sigma), dtype=complex)
        count = [0]

        def callback(_res):
            count[0] += 1

        x, info = spla.gmres(op, rhs.ravel(), M=pc, rtol=self.rtol, atol=0.0,
                             restart=self.restart, maxiter=self.maxiter, callback=callback,
                             callback_type="pr_norm")
        self.iterations += count[0]
        self.solves += 1
        if info != 0:
            resid = np.linalg.norm(op @ x - rhs.ravel()) / np.linalg.norm(rhs)
            if resid > 1e3 * self.rtol:
                raise IntegrationError(
                    f"resolvent solve at shift {sigma:.3e} did not converge "
                    f"(relative residual {resid:.2e})", float("nan"))
        return x.reshape(d, d)


def shift_schedule(gamma: float, horizon: float) -> np.ndarray:
    """Log-spaced shifts from gamma/2 down to about 1/horizon."""
    hi = 0.5 * gamma
    lo = min(hi, 1.0 / max(horizon, 1e-300))
    count = max(1, int(math.ceil(math.log10(hi / lo))) + 1)
    return hi * np.logspace(0.0, math.log10(lo / hi), count) if count > 1 else np.array([hi])


# Krylov projection --------------------------------------------------------------

class _ProjectedEvolution:
    def __init__(self, lproj: np.ndarray, beta: float):
        m = lproj.shape[0]
        self.m = m
        self.lproj = lproj
        start = np.zeros(m)
        start[0] = beta
        self.start = start
        evals, evecs = np.linalg.eig(lproj)
        self.evals = evals
        self.max_real = float(evals.real.max())
        self.use_eig = np.linalg.cond(evecs) < 1e8
        if self.use_eig:
            self.evecs = evecs
            self.coef = np.linalg.solve(evecs, start)

    def coefficients(self, dt: float) -> np.ndarray:
        if self.use_eig:
            return np.real(self.evecs @ (np.exp(self.evals * dt) * self.coef))
        return sla.expm(self.lproj * dt) @ self.start


def propagate_long_time(rho: np.ndarray, gen: LindbladGenerator, settings: IntegratorSettings,
                        model: LatticeModel) -> MasterResult:
    times = settings.times
    if gen.gamma == 0.0 or len(gen.jump_masks) == 0:
        return _propagate_unitary(rho, gen, settings)
    rec = _Recorder(settings, gen.dim)
    stepper = SplitStepper(gen)
    h_max = split_step_limit(gen)
    t_switch = settings.switch_time
    if t_switch is None:
        t_switch = SWITCH_DECAY / gen.gamma
    t_switch = min(t_switch, float(times[-1]))
    t = 0.0
    k = 0
    state = np.array(rho, dtype=complex)
    while k < len(times) and times[k] <= t_switch:
        state = stepper.advance(state, times[k] - t, h_max)
        t = float(times[k])
        rec.record(k, state)
        k += 1
    info = {"method": "long-time", "switch_time": t_switch, "split_step": h_max}
    if k == len(times):
        return rec.result(info)
    state = stepper.advance(state, t_switch - t, h_max)
    t = t_switch

    rho_st = stationary_state(model)
    packer = HermitianPacker(gen.dim)
    d = gen.dim
    delta = packer.pack(state - rho_st)
    beta = float(np.linalg.norm(delta))
    late = times[k:] - t
    if beta < 1e-15:
        for j in range(k, len(times)):
            rec.record(j, rho_st)
        info["krylov_dim"] = 0
        return rec.result(info)

    shifts = shift_schedule(gen.gamma, float(late[-1]))
    solver = ResolventSolver(gen, rho_st)
    max_dim = min(settings.krylov_max_dim, d * d - 1)
    basis = np.empty((max_dim + 1, d * d))
    lbasis = np.empty((max_dim + 1, d * d))
    lproj = np.zeros((max_dim + 1, max_dim + 1))
    work = np.empty((d, d), dtype=complex)

    def add_image(j):
        lbasis[j] = packer.pack(gen.apply(packer.unpack(basis[j]), work))
        lproj[:j + 1, j] = basis[:j + 1] @ lbasis[j]
        lproj[j, :j] = lbasis[:j] @ basis[j]

    basis[0] = delta / beta
    add_image(0)
    m = 1

    def append(w):
        nonlocal m
        w = packer.pack(0.5 * (w + w.conj().T))
        w[:d] -= w[:d].mean()
        for _ in range(2):
            w -= basis[:m].T @ (basis[:m] @ w)
        norm = float(np.linalg.norm(w))
        if norm < 1e-13 or m > max_dim:
            return False
        basis[m] = w / norm
        add_image(m)
        m += 1
        return True

    # Ladder phase: resolvents of the initial deviation at decreasing shifts.
    # Shifts below the slowest relaxation rate add nothing (the resolvent
    # saturates at L^-1) and are dropped.
    delta_mat = packer.unpack(delta)
    active = len(shifts)
    last_norm = None
    for j, sigma in enumerate(shifts):
        w = solver.solve(float(sigma), delta_mat)
        norm = float(np.linalg.norm(w))
        append(w)
        if last_norm is not None and norm < 2.0 * last_norm:
            active = j + 1
            break
        last_norm = norm
    shifts = shifts[:active]

    previous = None
    stable_checks = 0
    converged = False
    cycle = 0
    while m <= max_dim:
        sigma = float(shifts[cycle % len(shifts)])
        cycle += 1
        if not append(solver.solve(sigma, packer.unpack(basis[m - 1]))):
            converged = m <= max_dim
            break
        if m % CHECK_EVERY == 0:
            evo = _ProjectedEvolution(lproj[:m, :m], beta)
            pops = np.array([basis[:m, :d].T @ evo.coefficients(dt) for dt in late])
            if previous is not None:
                change = float(np.abs(pops - previous).max())
                logger.debug("krylov dim %d change %.2e its %d", m, change, solver.iterations)
                stable_checks = stable_checks + 1 if change < settings.krylov_tol else 0
                if stable_checks >= 2:
                    converged = True
                    break
            previous = pops
    evo = _ProjectedEvolution(lproj[:m, :m], beta)
    info.update(krylov_dim=m, krylov_converged=converged, gmres_iterations=solver.iterations,
                resolvent_solves=solver.solves, max_ritz_real=evo.max_real,
                shifts=shifts.tolist())
    if not converged:
        logger.warning("long-time propagator stopped at Krylov dimension %d without meeting "
                       "tolerance %.1e", m, settings.krylov_tol)
    for j, dt in enumerate(late):
        vec = basis[:m].T @ evo.coefficients(dt)
        rec.record(k + j, rho_st + packer.unpack(vec))
    return rec.result(info)
