"""Single-site mean-field dynamics in a homogeneous background of density nu.

A driven site sees the interaction shift Delta = 2 C6 nu^6 from its two
nearest neighbours. Its Bloch components obey

    dn/dt  = Omega s_y
    ds_x/dt = -(gamma/2) s_x - Delta s_y
    ds_y/dt = 2 Omega (1 - 2 n) - (gamma/2) s_y + Delta s_x

Eliminating the coherences (ds_x/dt = ds_y/dt = 0) and identifying n with
nu gives the density rate equation

    dnu/dt = (4 Omega^2 / gamma) * 2 / [1 + 4 (Delta / gamma)^2] * (1/2 - nu),

which grows as t^(1/13) while the interaction term dominates and nu << 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .analysis import fit_power_law

SLOPE_SHIFT_MIN = 10.0
SLOPE_DENSITY_MAX = 0.2
ADIABATIC_TOL = 0.1
SETTLE_DAMPING_TIMES = 30.0


@dataclass(frozen=True)
class MeanFieldState:
    n: float
    sx: float
    sy: float
    nu: float

    def __post_init__(self):
        if not (0.0 <= self.n <= 1.0 and 0.0 <= self.nu <= 1.0):
            raise ValueError("n and nu must lie in [0, 1]")
        if not (-1.0 <= self.sx <= 1.0 and -1.0 <= self.sy <= 1.0):
            raise ValueError("coherences must lie in [-1, 1]")

    def vector(self) -> np.ndarray:
        return np.array([self.n, self.sx, self.sy])


def interaction_shift(c6: float, nu: float) -> float:
    return 2.0 * c6 * nu**6


def meanfield_rhs(state, omega: float, gamma: float, c6: float, nu: float | None = None
                  ) -> np.ndarray:
    """(dn, ds_x, ds_y)/dt for a MeanFieldState or an (n, s_x, s_y) vector."""
    if isinstance(state, MeanFieldState):
        nu = state.nu if nu is None else nu
        n, sx, sy = state.n, state.sx, state.sy
    else:
        n, sx, sy = state
        if nu is None:
            raise ValueError("background density nu is required for vector states")
    shift = interaction_shift(c6, nu)
    return np.array([omega * sy,
                     -0.5 * gamma * sx - shift * sy,
                     2.0 * omega * (1.0 - 2.0 * n) - 0.5 * gamma * sy + shift * sx])


def density_rate_rhs(nu, omega: float, gamma: float, c6: float):
    """dnu/dt of the density rate equation; works elementwise on arrays."""
    if not gamma > 0:
        raise ValueError("the density rate equation needs gamma > 0")
    nu = np.asarray(nu, dtype=float)
    blocking = 2.0 * interaction_shift(c6, nu) / gamma
    value = 4.0 * omega**2 / gamma * 2.0 / (1.0 + blocking**2) * (0.5 - nu)
    return float(value) if value.ndim == 0 else value


def integrate_meanfield(state: MeanFieldState, omega: float, gamma: float, c6: float,
                        times, rtol: float = 1e-8, atol: float = 1e-10) -> np.ndarray:
    """(n, s_x, s_y) on the grid with the background nu held fixed; shape (T, 3)."""
    times = np.asarray(times, dtype=float)
    sol = solve_ivp(lambda _t, y: meanfield_rhs(y, omega, gamma, c6, state.nu),
                    (0.0, float(times[-1])), state.vector(), method="RK45", t_eval=times,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"mean-field integration failed: {sol.message}")
    return sol.y.T


def integrate_density(nu0: float, omega: float, gamma: float, c6: float, times,
                      rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """nu(t) from the density rate equation.

    Integrated in u = log(1 + 4 Omega^2 t / gamma) so that grids spanning many
    decades cost a number of steps proportional to the number of decades.
    """
    if not 0.0 <= nu0 <= 1.0:
        raise ValueError("initial density must lie in [0, 1]")
    times = np.asarray(times, dtype=float)
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be non-negative and strictly increasing")
    scale = 4.0 * omega**2 / gamma
    if scale == 0:
        return np.full(len(times), nu0)
    u_grid = np.log1p(scale * times)

    def rhs(u, y):
        # dnu/du = (1 + tau) dnu/dtau with tau the rescaled time
        return np.exp(u) * density_rate_rhs(y, omega, gamma, c6) / scale

    sol = solve_ivp(rhs, (0.0, float(u_grid[-1])), [nu0], method="RK45",
                    t_eval=u_grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"density integration failed: {sol.message}")
    return sol.y[0]


@dataclass(frozen=True)
class SlopeMeasurement:
    slope: float
    t_min: float
    t_max: float
    decades: float
    r_squared: float
    relative_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def slope_window(nu: np.ndarray, gamma: float, c6: float) -> np.ndarray:
    """Mask of samples with 2 C6 nu^6 / gamma >= 10 and nu <= 0.2."""
    nu = np.asarray(nu, dtype=float)
    return (interaction_shift(c6, nu) / gamma >= SLOPE_SHIFT_MIN) & (nu <= SLOPE_DENSITY_MAX)


def measure_slope(omega: float, gamma: float, c6: float, nu0: float = 1e-3,
                  per_decade: int = 20, target: float = 1.0 / 13.0) -> SlopeMeasurement:
    """Log-log slope of nu(t) over the interaction-dominated, low-density window.

    The window is empty unless 2 C6 / gamma exceeds about 10 / 0.2^6 = 1.6e5.
    """
    scale = 4.0 * omega**2 / gamma
    # nu reaches 1/2 by tau ~ (2 C6 / gamma)^2 in rescaled time; go a little beyond
    tau_end = 10.0 * max((2.0 * c6 / gamma) ** 2, 1.0)
    taus = np.logspace(-2, np.log10(tau_end), int(np.log10(tau_end) + 2) * per_decade + 1)
    times = np.concatenate([[0.0], taus / scale])
    nu = integrate_density(nu0, omega, gamma, c6, times)
    mask = slope_window(nu, gamma, c6) & (times > 0)
    if mask.sum() < 2:
        raise ValueError("the slope window (2 C6 nu^6 / gamma >= 10, nu <= 0.2) is empty for "
                         f"gamma={gamma}, c6={c6}")
    t_in = times[mask]
    fit = fit_power_law(times, (t_in[0], t_in[-1]), values=nu)
    return SlopeMeasurement(fit.slope, fit.t_min, fit.t_max, fit.decades, fit.r_squared,
                            abs(fit.slope - target) / target)


def eliminated_coherences(n: float, omega: float, gamma: float, c6: float, nu: float
                          ) -> tuple[float, float]:
    """Quasi-steady (s_x, s_y) from setting ds_x/dt = ds_y/dt = 0 at fixed n."""
    shift = interaction_shift(c6, nu)
    sy = 4.0 * omega * gamma * (1.0 - 2.0 * n) / (gamma**2 + 4.0 * shift**2)
    sx = -2.0 * shift * sy / gamma
    return sx, sy


@dataclass(frozen=True)
class AdiabaticReport:
    n: float
    sx_numeric: float
    sy_numeric: float
    sx_eliminated: float
    sy_eliminated: float
    relative_error: float
    coherence: float

    @property
    def within_tolerance(self) -> bool:
        return self.relative_error <= ADIABATIC_TOL


def adiabatic_check(omega: float, gamma: float, c6: float, nu: float, n0: float | None = None
                    ) -> AdiabaticReport:
    """Compare integrated coherences with the eliminated ones at fixed nu.

    The site starts at n0 (default nu) with no coherence and is integrated for
    30 coherence damping times 2/gamma; ``coherence`` is the magnitude of the
    eliminated (s_x, s_y), which vanishes as the interaction shift grows.
    """
    if not gamma > 0:
        raise ValueError("adiabatic elimination needs gamma > 0")
    n0 = nu if n0 is None else n0
    t_end = SETTLE_DAMPING_TIMES * 2.0 / gamma
    traj = integrate_meanfield(MeanFieldState(n0, 0.0, 0.0, nu), omega, gamma, c6,
                               np.array([0.0, t_end]))
    n, sx, sy = traj[-1]
    sx_el, sy_el = eliminated_coherences(n, omega, gamma, c6, nu)
    scale = np.hypot(sx_el, sy_el)
    error = np.hypot(sx - sx_el, sy - sy_el) / scale if scale > 0 else float(np.hypot(sx, sy))
    return AdiabaticReport(float(n), float(sx), float(sy), float(sx_el), float(sy_el),
                           float(error), float(scale))
