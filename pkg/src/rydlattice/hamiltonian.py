"""Many-body and two-atom Hamiltonians in the Fock basis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LatticeModel, occupation_table


def interaction_diagonal(model: LatticeModel) -> np.ndarray:
    """Van der Waals energy sum_{k<m} C6/|k-m|^6 n_k n_m for every basis state."""
    occ = occupation_table(model.n_sites).astype(float)
    energy = np.zeros(model.dim)
    for k in range(model.n_sites):
        for m in range(k + 1, model.n_sites):
            energy += model.c6 / model.distance(k + 1, m + 1) ** 6 * occ[:, k] * occ[:, m]
    return energy


def driven_site_masks(model: LatticeModel) -> np.ndarray:
    """Bit masks of the sites that carry a drive and a dephasing channel."""
    return np.array([1 << (k - 1) for k in model.free_sites], dtype=np.int64)


@dataclass(frozen=True)
class HamiltonianMatrix:
    matrix: np.ndarray
    diagonal: np.ndarray
    omega: float
    flip_masks: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_hamiltonian(model: LatticeModel) -> HamiltonianMatrix:
    """H = Omega sum_k sigma_x^(k) + sum_{k<m} C6/|k-m|^6 n_k n_m.

    Pinned sites are left out of the drive sum but keep their interactions.
    """
    diag = interaction_diagonal(model)
    masks = driven_site_masks(model)
    idx = np.arange(model.dim)
    h = np.diag(diag)
    for mask in masks:
        h[idx ^ mask, idx] += model.omega
    diag.setflags(write=False)
    h.setflags(write=False)
    return HamiltonianMatrix(h, diag, model.omega, masks)


def build_two_atom_hamiltonian(omega: float, c6: float, r: float) -> np.ndarray:
    """Single driven atom next to a permanently excited partner at distance r."""
    if not r > 0:
        raise ValueError(f"distance must be positive, got {r}")
    return np.array([[0.0, omega], [omega, c6 / r**6]])
