"""Pure-Python implementations of the hot loops.

These mirror ``_kernels.pyx`` call for call, including the order in which
random numbers are drawn, so the two backends produce the same samples.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"
UNIFORM_BLOCK = 4096


def liouvillian_apply(rho, lam0, masks, omega, out):
    """out = lam0 * rho - i omega sum_k (rho[i^m_k, :] - rho[:, j^m_k]).

    ``lam0`` holds the diagonal part of the generator in the Fock-pair basis.
    """
    np.multiply(lam0, rho, out=out)
    if omega != 0.0 and len(masks):
        idx = np.arange(rho.shape[0])
        acc = np.zeros_like(rho)
        for m in masks:
            flip = idx ^ int(m)
            acc += rho[flip, :]
            acc -= rho[:, flip]
        out += (-1j * omega) * acc
    return out


def drive_apply(rho, masks, omega, out):
    out[...] = 0.0
    if omega != 0.0 and len(masks):
        idx = np.arange(rho.shape[0])
        for m in masks:
            flip = idx ^ int(m)
            out += rho[flip, :]
            out -= rho[:, flip]
        out *= -1j * omega
    return out


class _UniformStream:
    """Buffered draws from ``draw(size)``, refilled in blocks of UNIFORM_BLOCK."""

    def __init__(self, draw):
        self.draw = draw
        self.buf = draw(UNIFORM_BLOCK)
        self.pos = 0

    def next(self):
        if self.pos == UNIFORM_BLOCK:
            self.buf = self.draw(UNIFORM_BLOCK)
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


def kmc_sample(state0, rates, totals, grid, rng, max_events):
    """Gillespie run recording the configuration index at each grid time.

    ``rates[s, k]`` is the flip rate of site k in configuration s (zero for
    pinned sites) and ``totals[s]`` its row sum. Returns the recorded states
    and the number of events performed.
    """
    n_grid = len(grid)
    states = np.empty(n_grid, dtype=np.int64)
    waits = _UniformStream(rng.standard_exponential)
    picks = _UniformStream(rng.random)
    n_sites = rates.shape[1]
    state = int(state0)
    t = 0.0
    events = 0
    g = 0
    while g < n_grid and grid[g] <= t:
        states[g] = state
        g += 1
    while g < n_grid:
        total = totals[state]
        if total <= 0.0:
            states[g:] = state
            break
        t_next = t + waits.next() / total
        u2 = picks.next()
        while g < n_grid and grid[g] < t_next:
            states[g] = state
            g += 1
        if g == n_grid:
            break
        target = u2 * total
        acc = 0.0
        site = n_sites - 1
        row = rates[state]
        for k in range(n_sites):
            acc += row[k]
            if target < acc:
                site = k
                break
        while row[site] == 0.0:
            site -= 1
        state ^= 1 << site
        t = t_next
        events += 1
        if events >= max_events:
            raise RuntimeError(f"event budget {max_events} exhausted at t = {t:.6g}")
    return states, events


def _norm_at(evecs, coeff, lam, dt, buf):
    np.multiply(coeff, np.exp(-1j * lam * dt), out=buf)
    psi = evecs @ buf
    return psi, float(np.vdot(psi, psi).real)


def qjmc_propagate(psi0, lam, evecs, evecs_inv, exc_count, masks, gamma, grid,
                   rng, t_tol, max_jumps):
    """One quantum-jump trajectory with exact no-jump propagation.

    The non-Hermitian Hamiltonian is diagonalised as evecs diag(lam) evecs^-1.
    Returns normalised states at the grid times, jump times and jump sites
    (0-based positions in ``masks``).
    """
    n_grid = len(grid)
    dim = psi0.shape[0]
    out = np.empty((n_grid, dim), dtype=complex)
    jump_times = []
    jump_sites = []
    buf = np.empty(dim, dtype=complex)
    t0 = 0.0
    coeff = evecs_inv @ psi0
    target = rng.random()
    g = 0
    while g < n_grid and grid[g] <= t0:
        out[g] = psi0
        g += 1
    while g < n_grid:
        t_lo = t0
        norm_lo = 1.0
        jumped = False
        while g < n_grid:
            psi, norm = _norm_at(evecs, coeff, lam, grid[g] - t0, buf)
            if norm > target:
                out[g] = psi / math.sqrt(norm)
                t_lo = grid[g]
                norm_lo = norm
                g += 1
            else:
                jumped = True
                break
        if not jumped:
            break
        t_hi = grid[g]
        t_jump, psi = _find_jump(evecs, coeff, lam, exc_count, gamma, t0, t_lo, t_hi,
                                 norm_lo, target, t_tol, buf)
        weights = np.array([np.vdot(psi, psi * ((np.arange(dim) & int(m)) != 0)).real
                            for m in masks])
        total = weights.sum()
        if not total > 0.0:
            raise RuntimeError(f"no jump weight at t = {t_jump:.6g}")
        pick = rng.random() * total
        acc = 0.0
        site = len(masks) - 1
        for k in range(len(masks)):
            acc += weights[k]
            if pick < acc:
                site = k
                break
        while weights[site] == 0.0:
            site -= 1
        psi = psi * ((np.arange(dim) & int(masks[site])) != 0)
        psi /= math.sqrt(float(np.vdot(psi, psi).real))
        jump_times.append(t_jump)
        jump_sites.append(site)
        if len(jump_times) > max_jumps:
            raise RuntimeError(f"jump budget {max_jumps} exhausted at t = {t_jump:.6g}")
        t0 = t_jump
        coeff = evecs_inv @ psi
        target = rng.random()
        while g < n_grid and grid[g] <= t0:
            out[g] = psi
            g += 1
    return out, np.array(jump_times), np.array(jump_sites, dtype=np.int64)


def _find_jump(evecs, coeff, lam, exc_count, gamma, t0, t_lo, t_hi, norm_lo, target,
               t_tol, buf):
    """Safeguarded Newton iteration for ||psi(t)||^2 = target on [t_lo, t_hi]."""
    t = t_lo
    psi = None
    for _ in range(200):
        psi, norm = _norm_at(evecs, coeff, lam, t - t0, buf)
        if norm > target:
            t_lo = t
        else:
            t_hi = t
        slope = -gamma * float(np.dot(exc_count, (psi.conj() * psi).real))
        if slope < 0.0:
            t_new = t - (norm - target) / slope
        else:
            t_new = 0.5 * (t_lo + t_hi)
        if not t_lo < t_new < t_hi:
            t_new = 0.5 * (t_lo + t_hi)
        if abs(t_new - t) <= t_tol * max(1.0, abs(t_new)) or t_hi - t_lo <= t_tol * max(1.0, t_hi):
            t = t_new
            break
        t = t_new
    psi, norm = _norm_at(evecs, coeff, lam, t - t0, buf)
    return t, psi / math.sqrt(norm)


# Hamming-shell sweeps for the resolvent preconditioner. Fock pairs (a, b) are
# grouped by the Hamming distance of a ^ b; the drive only connects adjacent
# shells, and flipping site m moves a pair outward exactly when bit m of a ^ b
# is clear. ``order`` lists flat pair indices by decreasing shell and
# ``bounds[h]:bounds[h + 1]`` is the slice of shell (top - h).

def _neighbours(flat, dim, mask):
    a = flat // dim
    b = flat % dim
    return (a ^ mask) * dim + b, a * dim + (b ^ mask), ((a ^ b) & mask) == 0


def shell_dress(shifted, order, bounds, masks, omega):
    """Inverse of the locator-dressed diagonal: S_c = shifted_c + omega^2 sum_out 1/S_out."""
    dim = shifted.shape[0]
    s = np.array(shifted, dtype=complex).ravel()
    inv = np.zeros_like(s)
    for h in range(len(bounds) - 1):
        flat = order[bounds[h]:bounds[h + 1]]
        acc = np.zeros(len(flat), dtype=complex)
        for m in masks:
            left, right, out = _neighbours(flat, dim, int(m))
            acc += np.where(out, inv[left] + inv[right], 0.0)
        s[flat] += omega * omega * acc
        inv[flat] = 1.0 / s[flat]
    return inv.reshape(shifted.shape)


def shell_forward(b, order, bounds, masks, omega, inv_s):
    """Eliminate outward couplings shell by shell, ending at the populations (in place)."""
    dim = b.shape[0]
    bf = b.reshape(-1)
    inv = inv_s.reshape(-1)
    w = 1j * omega
    for h in range(len(bounds) - 1):
        flat = order[bounds[h]:bounds[h + 1]]
        acc = np.zeros(len(flat), dtype=complex)
        for m in masks:
            left, right, out = _neighbours(flat, dim, int(m))
            acc += np.where(out, w * bf[left] * inv[left] - w * bf[right] * inv[right], 0.0)
        bf[flat] -= acc
    return b


def shell_backward(x, b, order, bounds, masks, omega, inv_s):
    """Back-substitute coherences from the solved populations outward (in place)."""
    dim = x.shape[0]
    xf = x.reshape(-1)
    bf = b.reshape(-1)
    inv = inv_s.reshape(-1)
    w = 1j * omega
    for h in range(len(bounds) - 2, -1, -1):
        flat = order[bounds[h]:bounds[h + 1]]
        acc = bf[flat].copy()
        for m in masks:
            left, right, out = _neighbours(flat, dim, int(m))
            acc -= np.where(out, 0.0, w * xf[left] - w * xf[right])
        xf[flat] = acc * inv[flat]
    return x
