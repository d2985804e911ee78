# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_kernels_py``.

Random numbers are drawn in the same order as the Python versions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, cos, sin, fabs
from scipy.linalg.cython_blas cimport zgemv

cnp.import_array()

BACKEND = "cython"
DEF UNIFORM_BLOCK = 4096


def liouvillian_apply(const double complex[:, ::1] rho, const double complex[:, ::1] lam0,
                      const cnp.int64_t[::1] masks, double omega,
                      double complex[:, ::1] out):
    cdef Py_ssize_t d = rho.shape[0], n = masks.shape[0]
    cdef Py_ssize_t i, j, k, m
    cdef double complex acc
    cdef double complex coef = -1j * omega
    for i in range(d):
        for j in range(d):
            acc = 0
            for k in range(n):
                m = masks[k]
                acc = acc + rho[i ^ m, j] - rho[i, j ^ m]
            out[i, j] = lam0[i, j] * rho[i, j] + coef * acc
    return np.asarray(out)


def drive_apply(const double complex[:, ::1] rho, const cnp.int64_t[::1] masks,
                double omega, double complex[:, ::1] out):
    cdef Py_ssize_t d = rho.shape[0], n = masks.shape[0]
    cdef Py_ssize_t i, j, k, m
    cdef double complex acc
    cdef double complex coef = -1j * omega
    for i in range(d):
        for j in range(d):
            acc = 0
            for k in range(n):
                m = masks[k]
                acc = acc + rho[i ^ m, j] - rho[i, j ^ m]
            out[i, j] = coef * acc
    return np.asarray(out)


cdef class _UniformStream:
    cdef object draw
    cdef double[::1] buf
    cdef Py_ssize_t pos

    def __init__(self, draw):
        self.draw = draw
        self.buf = draw(UNIFORM_BLOCK)
        self.pos = 0

    cdef inline double next(self):
        cdef double u
        if self.pos == UNIFORM_BLOCK:
            self.buf = self.draw(UNIFORM_BLOCK)
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


def kmc_sample(cnp.int64_t state0, const double[:, ::1] rates, const double[::1] totals,
               const double[::1] grid, rng, cnp.int64_t max_events):
    cdef Py_ssize_t n_grid = grid.shape[0], n_sites = rates.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] states_arr = np.empty(n_grid, dtype=np.int64)
    cdef cnp.int64_t[::1] states = states_arr
    cdef _UniformStream waits = _UniformStream(rng.standard_exponential)
    cdef _UniformStream picks = _UniformStream(rng.random)
    cdef cnp.int64_t state = state0, events = 0
    cdef double t = 0.0, total, u2, t_next, target, acc
    cdef Py_ssize_t g = 0, k, site
    while g < n_grid and grid[g] <= t:
        states[g] = state
        g += 1
    while g < n_grid:
        total = totals[state]
        if total <= 0.0:
            while g < n_grid:
                states[g] = state
                g += 1
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
        for k in range(n_sites):
            acc += rates[state, k]
            if target < acc:
                site = k
                break
        while rates[state, site] == 0.0:
            site -= 1
        state ^= (<cnp.int64_t>1) << site
        t = t_next
        events += 1
        if events >= max_events:
            raise RuntimeError(f"event budget {max_events} exhausted at t = {t:.6g}")
    return states_arr, events


cdef double _norm_at(double complex[:, ::1] evecs_f, const double complex[::1] coeff,
                     const double complex[::1] lam, double dt, double complex[::1] buf,
                     double complex[::1] psi) noexcept nogil:
    # evecs_f is evecs transposed (C layout), which BLAS reads as evecs in
    # column-major order.
    cdef int d = <int>coeff.shape[0], one = 1
    cdef Py_ssize_t i
    cdef double complex alpha = 1.0, beta = 0.0
    cdef double re, im, mag, total = 0.0
    cdef char trans = b'N'
    for i in range(d):
        re = lam[i].real * dt
        im = lam[i].imag * dt
        mag = exp(im)
        buf[i] = coeff[i] * (mag * cos(re) - 1j * mag * sin(re))
    zgemv(&trans, &d, &d, &alpha, &evecs_f[0, 0], &d, &buf[0], &one, &beta, &psi[0], &one)
    for i in range(d):
        total += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
    return total


def qjmc_propagate(psi0, lam, evecs, evecs_inv, exc_count, masks, double gamma, grid,
                   rng, double t_tol, Py_ssize_t max_jumps):
    cdef double complex[::1] lam_v = np.ascontiguousarray(lam, dtype=complex)
    cdef double complex[:, ::1] evecs_f = np.ascontiguousarray(np.asarray(evecs).T, dtype=complex)
    evecs_inv = np.ascontiguousarray(evecs_inv, dtype=complex)
    cdef const double[::1] exc = np.ascontiguousarray(exc_count, dtype=float)
    cdef const cnp.int64_t[::1] mask_v = np.ascontiguousarray(masks, dtype=np.int64)
    cdef const double[::1] grid_v = np.ascontiguousarray(grid, dtype=float)
    cdef Py_ssize_t n_grid = grid_v.shape[0], dim = lam_v.shape[0], n_masks = mask_v.shape[0]
    out_arr = np.empty((n_grid, dim), dtype=complex)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[::1] buf = np.empty(dim, dtype=complex)
    cdef double complex[::1] psi = np.empty(dim, dtype=complex)
    cdef double complex[::1] coeff
    cdef double[::1] weights = np.empty(n_masks, dtype=float)
    jump_times = []
    jump_sites = []
    cdef double t0 = 0.0, t_lo, t_hi, norm, norm_lo, target, t, t_new, slope, total, pick, acc, p
    cdef Py_ssize_t g = 0, i, k, site, it
    cdef bint jumped
    psi_start = np.ascontiguousarray(psi0, dtype=complex)
    coeff = evecs_inv @ psi_start
    target = rng.random()
    cdef const double complex[::1] start_v = psi_start
    while g < n_grid and grid_v[g] <= t0:
        for i in range(dim):
            out[g, i] = start_v[i]
        g += 1
    while g < n_grid:
        t_lo = t0
        norm_lo = 1.0
        jumped = False
        while g < n_grid:
            norm = _norm_at(evecs_f, coeff, lam_v, grid_v[g] - t0, buf, psi)
            if norm > target:
                for i in range(dim):
                    out[g, i] = psi[i] / sqrt(norm)
                t_lo = grid_v[g]
                norm_lo = norm
                g += 1
            else:
                jumped = True
                break
        if not jumped:
            break
        t_hi = grid_v[g]
        t = t_lo
        for it in range(200):
            norm = _norm_at(evecs_f, coeff, lam_v, t - t0, buf, psi)
            if norm > target:
                t_lo = t
            else:
                t_hi = t
            slope = 0.0
            for i in range(dim):
                slope += exc[i] * (psi[i].real * psi[i].real + psi[i].imag * psi[i].imag)
            slope *= -gamma
            if slope < 0.0:
                t_new = t - (norm - target) / slope
            else:
                t_new = 0.5 * (t_lo + t_hi)
            if not (t_lo < t_new < t_hi):
                t_new = 0.5 * (t_lo + t_hi)
            if fabs(t_new - t) <= t_tol * max(1.0, fabs(t_new)) or t_hi - t_lo <= t_tol * max(1.0, t_hi):
                t = t_new
                break
            t = t_new
        norm = _norm_at(evecs_f, coeff, lam_v, t - t0, buf, psi)
        for i in range(dim):
            psi[i] = psi[i] / sqrt(norm)
        total = 0.0
        for k in range(n_masks):
            acc = 0.0
            for i in range(dim):
                if i & mask_v[k]:
                    acc += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
            weights[k] = acc
            total += acc
        if not total > 0.0:
            raise RuntimeError(f"no jump weight at t = {t:.6g}")
        pick = rng.random() * total
        acc = 0.0
        site = n_masks - 1
        for k in range(n_masks):
            acc += weights[k]
            if pick < acc:
                site = k
                break
        while weights[site] == 0.0:
            site -= 1
        p = 0.0
        for i in range(dim):
            if not (i & mask_v[site]):
                psi[i] = 0.0
            else:
                p += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
        for i in range(dim):
            psi[i] = psi[i] / sqrt(p)
        jump_times.append(t)
        jump_sites.append(site)
        if len(jump_times) > max_jumps:
            raise RuntimeError(f"jump budget {max_jumps} exhausted at t = {t:.6g}")
        t0 = t
        coeff = evecs_inv @ np.asarray(psi)
        target = rng.random()
        while g < n_grid and grid_v[g] <= t0:
            out[g, :] = psi
            g += 1
    return out_arr, np.array(jump_times), np.array(jump_sites, dtype=np.int64)


def shell_dress(shifted, const cnp.int64_t[::1] order, const cnp.int64_t[::1] bounds,
                const cnp.int64_t[::1] masks, double omega):
    cdef Py_ssize_t dim = shifted.shape[0], n_masks = masks.shape[0]
    cdef double complex[::1] s = np.array(shifted, dtype=complex).ravel()
    inv_arr = np.zeros(dim * dim, dtype=complex)
    cdef double complex[::1] inv = inv_arr
    cdef Py_ssize_t h, p, k, c, a, b, x, m
    cdef double complex acc
    cdef double w2 = omega * omega
    for h in range(bounds.shape[0] - 1):
        for p in range(bounds[h], bounds[h + 1]):
            c = order[p]
            a = c // dim
            b = c % dim
            x = a ^ b
            acc = 0
            for k in range(n_masks):
                m = masks[k]
                if x & m == 0:
                    acc = acc + inv[(a ^ m) * dim + b] + inv[a * dim + (b ^ m)]
            s[c] = s[c] + w2 * acc
            inv[c] = 1.0 / s[c]
    return inv_arr.reshape(shifted.shape)


def shell_forward(b_arr, const cnp.int64_t[::1] order, const cnp.int64_t[::1] bounds,
                  const cnp.int64_t[::1] masks, double omega, inv_s):
    cdef Py_ssize_t dim = b_arr.shape[0], n_masks = masks.shape[0]
    cdef double complex[::1] bf = b_arr.reshape(-1)
    cdef const double complex[::1] inv = inv_s.reshape(-1)
    cdef Py_ssize_t h, p, k, c, a, b, x, m, left, right
    cdef double complex acc
    cdef double complex w = 1j * omega
    for h in range(bounds.shape[0] - 1):
        for p in range(bounds[h], bounds[h + 1]):
            c = order[p]
            a = c // dim
            b = c % dim
            x = a ^ b
            acc = 0
            for k in range(n_masks):
                m = masks[k]
                if x & m == 0:
                    left = (a ^ m) * dim + b
                    right = a * dim + (b ^ m)
                    acc = acc + w * (bf[left] * inv[left] - bf[right] * inv[right])
            bf[c] = bf[c] - acc
    return b_arr


def shell_backward(x_arr, b_arr, const cnp.int64_t[::1] order, const cnp.int64_t[::1] bounds,
                   const cnp.int64_t[::1] masks, double omega, inv_s):
    cdef Py_ssize_t dim = x_arr.shape[0], n_masks = masks.shape[0]
    cdef double complex[::1] xf = x_arr.reshape(-1)
    cdef const double complex[::1] bf = b_arr.reshape(-1)
    cdef const double complex[::1] inv = inv_s.reshape(-1)
    cdef Py_ssize_t h, p, k, c, a, b, x, m
    cdef double complex acc
    cdef double complex w = 1j * omega
    for h in range(bounds.shape[0] - 2, -1, -1):
        for p in range(bounds[h], bounds[h + 1]):
            c = order[p]
            a = c // dim
            b = c % dim
            x = a ^ b
            acc = bf[c]
            for k in range(n_masks):
                m = masks[k]
                if x & m != 0:
                    acc = acc - w * (xf[(a ^ m) * dim + b] - xf[a * dim + (b ^ m)])
            xf[c] = acc * inv[c]
    return x_arr
