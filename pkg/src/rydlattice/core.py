"""Lattice model, Fock basis conventions and local operators.

Basis convention shared by every engine: a basis index ``i`` in ``[0, 2**N)``
encodes the level of site ``k`` (1-based) in bit ``k - 1``; 0 is the ground
level ``g`` and 1 the Rydberg level ``e``. Site 1 is the least significant
bit, so for two sites the basis order is ``gg, eg, ge, ee``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

MAX_DENSITY_SITES = 12
STATE_TOL = 1e-9


class BasisParseError(ValueError):
    """Raised for occupation strings that do not match the model."""


@dataclass(frozen=True)
class LatticeModel:
    """Open one-dimensional chain with unit spacing.

    ``pinned_sites`` holds ``(site, level)`` pairs with 1-based sites and
    ``level`` in ``{0, 1}``. Pinned sites keep their interactions but lose
    their drive and dephasing.
    """

    n_sites: int
    c6: float
    omega: float
    gamma: float
    pinned_sites: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ValueError(f"n_sites must be a positive integer, got {self.n_sites}")
        if not self.c6 > 0:
            raise ValueError(f"c6 must be positive, got {self.c6}")
        if self.omega < 0 or self.gamma < 0:
            raise ValueError("omega and gamma must be non-negative")
        pins = frozenset((int(s), int(v)) for s, v in self.pinned_sites)
        for site, level in pins:
            if not 1 <= site <= self.n_sites:
                raise IndexError(f"pinned site {site} outside 1..{self.n_sites}")
            if level not in (0, 1):
                raise ValueError(f"pinned level must be 0 or 1, got {level}")
        if len({s for s, _ in pins}) != len(pins):
            raise ValueError("a site is pinned to two levels")
        object.__setattr__(self, "pinned_sites", pins)

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    @property
    def lattice_spacing(self) -> float:
        return 1.0

    @property
    def pinned_map(self) -> dict:
        return dict(self.pinned_sites)

    @property
    def free_sites(self) -> list[int]:
        pinned = self.pinned_map
        return [k for k in range(1, self.n_sites + 1) if k not in pinned]

    def distance(self, k: int, m: int) -> float:
        return abs(k - m) * self.lattice_spacing

    def with_params(self, **changes) -> "LatticeModel":
        values = dict(n_sites=self.n_sites, c6=self.c6, omega=self.omega,
                      gamma=self.gamma, pinned_sites=self.pinned_sites)
        values.update(changes)
        return LatticeModel(**values)


def _check_site(model: LatticeModel, site: int) -> None:
    if not 1 <= site <= model.n_sites:
        raise IndexError(f"site {site} outside 1..{model.n_sites}")


def occupation_table(n_sites: int) -> np.ndarray:
    """Matrix of shape (2**N, N) with entry [i, k-1] = level of site k in state i."""
    idx = np.arange(1 << n_sites)
    return ((idx[:, None] >> np.arange(n_sites)) & 1).astype(np.int8)


def excitation_count(n_sites: int) -> np.ndarray:
    """Number of excited sites for every basis index."""
    return occupation_table(n_sites).sum(axis=1).astype(float)


def build_number_operator(model: LatticeModel, site: int) -> np.ndarray:
    """Projector onto the Rydberg level of ``site`` as a dense diagonal matrix."""
    _check_site(model, site)
    idx = np.arange(model.dim)
    return np.diag(((idx >> (site - 1)) & 1).astype(float))


def build_sigma_x(model: LatticeModel, site: int) -> np.ndarray:
    """Bit-flip permutation matrix acting on ``site``."""
    _check_site(model, site)
    idx = np.arange(model.dim)
    out = np.zeros((model.dim, model.dim))
    out[idx ^ (1 << (site - 1)), idx] = 1.0
    return out


def basis_index(occupation: str, n_sites: int | None = None) -> int:
    """Fock index of an occupation string such as ``"ggggeggg"``.

    Character ``j`` (0-based) of the string is site ``j + 1``.
    """
    if not isinstance(occupation, str) or not occupation:
        raise BasisParseError("occupation string must be a non-empty str")
    if n_sites is not None and len(occupation) != n_sites:
        raise BasisParseError(
            f"occupation {occupation!r} has length {len(occupation)}, expected {n_sites}")
    index = 0
    for pos, char in enumerate(occupation):
        if char == "e":
            index |= 1 << pos
        elif char != "g":
            raise BasisParseError(f"invalid level {char!r} in {occupation!r}; use 'g' or 'e'")
    return index


def occupation_string(index: int, n_sites: int) -> str:
    if not 0 <= index < (1 << n_sites):
        raise IndexError(f"basis index {index} outside [0, {1 << n_sites})")
    return "".join("e" if (index >> k) & 1 else "g" for k in range(n_sites))


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def to_density(self) -> "DensityMatrix":
        psi = self.amplitudes
        return DensityMatrix(np.outer(psi, psi.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def hermiticity_error(self) -> float:
        rho = self.entries
        return float(np.abs(rho - rho.conj().T).max())

    def min_eigenvalue(self) -> float:
        rho = self.entries
        return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])

    def validate(self, tol: float = STATE_TOL) -> None:
        scale = max(1.0, float(np.abs(self.entries).max()))
        if self.hermiticity_error() > tol * scale:
            raise ValueError(f"density matrix not Hermitian (error {self.hermiticity_error():.2e})")
        if abs(self.trace() - 1.0) > tol:
            raise ValueError(f"density matrix trace {self.trace()!r} differs from 1")
        if self.min_eigenvalue() < -tol:
            raise ValueError(f"density matrix has eigenvalue {self.min_eigenvalue():.2e}")

    @classmethod
    def fully_mixed(cls, n_sites: int) -> "DensityMatrix":
        dim = 1 << n_sites
        return cls(np.eye(dim) / dim)


def fock_state(model: LatticeModel, occupation: str) -> PureState:
    """Unit vector for an occupation string of length N over {g, e}."""
    index = basis_index(occupation, model.n_sites)
    for site, level in model.pinned_sites:
        if (index >> (site - 1)) & 1 != level:
            raise BasisParseError(
                f"site {site} is pinned to {'ge'[level]!r} but {occupation!r} disagrees")
    amps = np.zeros(model.dim, dtype=complex)
    amps[index] = 1.0
    return PureState(amps)


def check_density_size(model: LatticeModel) -> None:
    if model.n_sites > MAX_DENSITY_SITES:
        raise ValueError(
            f"density-matrix engines are capped at N = {MAX_DENSITY_SITES}, got {model.n_sites}")


@dataclass(frozen=True)
class ClassicalConfig:
    """Occupation bits of a classical configuration plus the pinned-site mask."""

    bits: tuple
    pinned_mask: tuple

    @classmethod
    def from_string(cls, occupation: str, model: LatticeModel) -> "ClassicalConfig":
        index = basis_index(occupation, model.n_sites)
        pinned = model.pinned_map
        bits = tuple((index >> k) & 1 for k in range(model.n_sites))
        mask = tuple(k + 1 in pinned for k in range(model.n_sites))
        for site, level in pinned.items():
            if bits[site - 1] != level:
                raise BasisParseError(f"site {site} is pinned to {'ge'[level]!r}")
        return cls(bits, mask)

    @property
    def index(self) -> int:
        return sum(b << k for k, b in enumerate(self.bits))

    def flipped(self, site: int) -> "ClassicalConfig":
        if self.pinned_mask[site - 1]:
            raise ValueError(f"site {site} is pinned")
        bits = list(self.bits)
        bits[site - 1] ^= 1
        return ClassicalConfig(tuple(bits), self.pinned_mask)


def pinned_index_mask(model: LatticeModel) -> tuple[int, int]:
    """Bit masks ``(pinned, pinned_excited)`` over basis indices."""
    mask = 0
    value = 0
    for site, level in model.pinned_sites:
        mask |= 1 << (site - 1)
        value |= level << (site - 1)
    return mask, value


def sites_iter(model: LatticeModel) -> Iterable[int]:
    return range(1, model.n_sites + 1)
