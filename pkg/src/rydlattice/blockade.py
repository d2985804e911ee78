"""Generalised blockade radius r_G from the driven-dissipative two-atom problem.

n_bar(r) is the Rabi-cycle average Omega * int_0^{1/Omega} <n(t, r)> dt of the
driven atom's excitation with an excited partner at distance r. r_G is where
n_bar reaches half its value at infinite separation. The closed-form
interpolation r_G = (2 C6 / [a Omega^p + gamma^p]^{1/p})^{1/6} seeds and
cross-checks the bisection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .master import IntegrationError, integrate_two_atom, rabi_average

logger = logging.getLogger(__name__)

INTERP_A = 11.1
INTERP_P = 6.0 / 5.0
FAR_FACTOR = 20.0
BRACKET_FACTOR = 3.0
BRACKET_EXPANSIONS = 20
QUADRATURE_POINTS = 201
R_RTOL = 1e-4


class BracketError(RuntimeError):
    """No half-saturation crossing was found; ``trace`` holds the (r, ratio) probes."""

    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


@dataclass
class BlockadeScan:
    """n_bar(r) samples for one (gamma, Omega, C6) together with the saturation value."""

    gamma: float
    omega: float
    c6: float
    saturation: float
    samples: list = field(default_factory=list)

    def add(self, r: float, value: float) -> None:
        self.samples.append((float(r), float(value)))

    @property
    def radii(self) -> np.ndarray:
        return np.array([r for r, _ in sorted(self.samples)])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in sorted(self.samples)])

    @property
    def ratios(self) -> np.ndarray:
        return self.values / self.saturation


def _check_positive(**values) -> None:
    for name, value in values.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")


def rabi_cycle_average(omega: float, gamma: float, c6: float, r: float,
                       points: int = QUADRATURE_POINTS) -> float:
    """Omega times the Simpson integral of <n(t, r)> over t in [0, 1/Omega]."""
    _check_positive(omega=omega, r=r)
    if gamma < 0 or c6 < 0:
        raise ValueError("gamma and c6 must be non-negative")
    if points < 3 or points % 2 == 0:
        raise ValueError("Simpson quadrature needs an odd number of at least 3 points")
    times = np.linspace(0.0, 1.0 / omega, points)
    values = integrate_two_atom(omega, gamma, c6, r, times)
    return float(np.clip(rabi_average(values, times, omega), 0.0, 1.0))


def interpolated_r_G(omega: float, gamma: float, c6: float) -> float:
    """Closed-form interpolation of the generalised blockade radius."""
    if omega < 0 or gamma < 0:
        raise ValueError("omega and gamma must be non-negative")
    if omega == 0 and gamma == 0:
        raise ValueError("omega and gamma cannot both be zero")
    _check_positive(c6=c6)
    rate = (INTERP_A * omega**INTERP_P + gamma**INTERP_P) ** (1.0 / INTERP_P)
    return (2.0 * c6 / rate) ** (1.0 / 6.0)


def matched_pairs(r_g_target: float, ratio: float, c6: float) -> tuple[float, float]:
    """(gamma, omega) with gamma = ratio * omega whose interpolated r_G equals the target."""
    _check_positive(r_g_target=r_g_target, c6=c6)
    if ratio < 0:
        raise ValueError(f"ratio must be non-negative, got {ratio}")
    scale = (INTERP_A + ratio**INTERP_P) ** (1.0 / INTERP_P)
    omega = 2.0 * c6 / r_g_target**6 / scale
    return ratio * omega, omega


def saturation_value(omega: float, gamma: float, c6: float) -> float:
    """n_bar at r_far = FAR_FACTOR times the interpolated r_G."""
    r_far = FAR_FACTOR * interpolated_r_G(omega, gamma, c6)
    return rabi_cycle_average(omega, gamma, c6, r_far)


def find_r_G(omega: float, gamma: float, c6: float, rtol: float = R_RTOL,
             scan: BlockadeScan | None = None) -> float:
    """Bisection for n_bar(r) / n_bar(inf) = 1/2 seeded by the interpolation.

    Probes are appended to ``scan`` when one is given.
    """
    _check_positive(omega=omega, c6=c6)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    seed = interpolated_r_G(omega, gamma, c6)
    sat = saturation_value(omega, gamma, c6)
    if scan is not None:
        scan.saturation = sat
    trace = []

    def excess(r):
        value = rabi_cycle_average(omega, gamma, c6, r)
        trace.append((r, value / sat))
        if scan is not None:
            scan.add(r, value)
        return value / sat - 0.5

    lo, hi = seed / BRACKET_FACTOR, seed * BRACKET_FACTOR
    f_lo, f_hi = excess(lo), excess(hi)
    for _ in range(BRACKET_EXPANSIONS):
        if f_lo <= 0 <= f_hi:
            break
        if f_lo > 0:
            lo /= BRACKET_FACTOR
            f_lo = excess(lo)
        if f_hi < 0:
            hi *= BRACKET_FACTOR
            f_hi = excess(hi)
    else:
        raise BracketError(f"no half-saturation crossing in [{lo:.4g}, {hi:.4g}]", trace)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    return float(bisect(excess, lo, hi, xtol=1e-300, rtol=rtol))


def scan_radii(omega: float, gamma: float, c6: float, radii) -> BlockadeScan:
    """n_bar on a list of separations."""
    scan = BlockadeScan(gamma, omega, c6, saturation_value(omega, gamma, c6))
    for r in radii:
        scan.add(r, rabi_cycle_average(omega, gamma, c6, r))
    return scan


@dataclass(frozen=True)
class GridCell:
    gamma: float
    omega: float
    c6: float
    r_G_bisect: float
    r_G_interp: float
    half_saturation_ratio: float
    error: str | None = None


@dataclass
class ValidationGrid:
    cells: list

    @property
    def ok_cells(self) -> list:
        return [c for c in self.cells if c.error is None]

    @property
    def max_deviation(self) -> float:
        """Largest |ratio - 1/2| over the successful cells, relative to 1/2."""
        return max(abs(c.half_saturation_ratio - 0.5) / 0.5 for c in self.ok_cells)

    def rows(self):
        for c in self.cells:
            yield (c.gamma, c.omega, c.c6, c.r_G_bisect, c.r_G_interp, c.half_saturation_ratio)


GRID_COLUMNS = ("gamma", "omega", "c6", "r_G_bisect", "r_G_interp", "half_saturation_ratio")


def grid_cell(gamma: float, omega: float, c6: float, bisect_radius: bool = True) -> GridCell:
    """Half-saturation ratio at the interpolated r_G, and the bisected r_G if requested."""
    r_interp = interpolated_r_G(omega, gamma, c6)
    try:
        sat = saturation_value(omega, gamma, c6)
        ratio = rabi_cycle_average(omega, gamma, c6, r_interp) / sat
        r_bis = find_r_G(omega, gamma, c6) if bisect_radius else float("nan")
    except (IntegrationError, BracketError, np.linalg.LinAlgError) as exc:
        logger.warning("grid cell gamma=%g omega=%g failed: %s", gamma, omega, exc)
        return GridCell(gamma, omega, c6, float("nan"), r_interp, float("nan"), str(exc))
    return GridCell(gamma, omega, c6, r_bis, r_interp, float(ratio))


def validation_grid(gammas, omegas, c6: float, bisect_radius: bool = True) -> ValidationGrid:
    """Evaluate every (gamma, omega) pair; failures are recorded per cell, not raised."""
    cells = [grid_cell(float(g), float(o), c6, bisect_radius) for g in gammas for o in omegas]
    return ValidationGrid(cells)
