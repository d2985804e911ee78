"""Power-law growth exponents N_e(t) ~ t^(1/alpha) and their dependence on gamma/Omega."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .observables import TimeSeries

logger = logging.getLogger(__name__)

MIN_WINDOW_POINTS = 10
RESAMPLE_POINTS = 64
START_FACTOR = 1.5
END_FRACTION = 0.8
POOR_FIT_R2 = 0.9


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares line through (log t, log N_e); alpha is the inverse slope."""

    alpha: float
    slope: float
    amplitude: float
    t_min: float
    t_max: float
    r_squared: float
    slope_stderr: float
    sample_times: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)

    @property
    def decades(self) -> float:
        return float(np.log10(self.t_max / self.t_min))

    @property
    def poor(self) -> bool:
        return self.r_squared < POOR_FIT_R2

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "slope": self.slope, "amplitude": self.amplitude,
                "t_min": self.t_min, "t_max": self.t_max, "decades": self.decades,
                "r_squared": self.r_squared, "slope_stderr": self.slope_stderr,
                "poor_fit": self.poor}


def default_window(times: np.ndarray, values: np.ndarray, n_sites: int) -> tuple[float, float]:
    """From N_e first exceeding 1.5 N_e(0) until N_e first reaches 80% of N/2."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    start = np.flatnonzero((values > START_FACTOR * values[0]) & (times > 0))
    if len(start) == 0:
        raise ValueError("N_e never exceeds 1.5 N_e(0); no growth window")
    i0 = start[0]
    stop = np.flatnonzero(values[i0:] >= END_FRACTION * n_sites / 2.0)
    i1 = i0 + stop[0] if len(stop) else len(times) - 1
    if i1 <= i0:
        raise ValueError("growth window is empty")
    return float(times[i0]), float(times[i1])


def fit_power_law(series, window: tuple[float, float] | None = None, channel: str = "N_e",
                  values: np.ndarray | None = None, n_resample: int = RESAMPLE_POINTS
                  ) -> PowerLawFit:
    """Fit ``channel`` of a TimeSeries (or ``values`` on the times array ``series``).

    The windowed samples are linearly interpolated in log-log space onto
    ``n_resample`` log-spaced times so dense stretches of the grid do not
    dominate the regression.
    """
    if isinstance(series, TimeSeries):
        times = series.times
        data = np.asarray(series[channel], dtype=float)
        n_sites = series.metadata.get("n_sites")
    else:
        times = np.asarray(series, dtype=float)
        data = np.asarray(values, dtype=float)
        n_sites = None
    if window is None:
        if n_sites is None:
            raise ValueError("default window needs the number of sites")
        window = default_window(times, data, n_sites)
    t_min, t_max = map(float, window)
    if not 0 < t_min < t_max:
        raise ValueError(f"invalid fit window [{t_min}, {t_max}]")
    inside = (times >= t_min) & (times <= t_max)
    if inside.sum() < MIN_WINDOW_POINTS:
        raise ValueError(f"only {inside.sum()} samples in the fit window, "
                         f"need {MIN_WINDOW_POINTS}")
    t_in, v_in = times[inside], data[inside]
    if np.any(v_in <= 0):
        raise ValueError("power-law fit needs strictly positive values")
    log_t = np.log(t_in)
    sample_log_t = np.linspace(log_t[0], log_t[-1], n_resample)
    sample_log_v = np.interp(sample_log_t, log_t, np.log(v_in))
    coeffs, cov = np.polyfit(sample_log_t, sample_log_v, 1, cov="unscaled")
    slope, intercept = map(float, coeffs)
    predicted = slope * sample_log_t + intercept
    residuals = sample_log_v - predicted
    ss_res = float(residuals @ residuals)
    ss_tot = float(((sample_log_v - sample_log_v.mean()) ** 2).sum())
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(n_resample - 2, 1)
    stderr = float(np.sqrt(cov[0, 0] * ss_res / dof))
    if slope <= 0:
        raise ValueError(f"non-growing data in the window (slope {slope:.3g})")
    fit = PowerLawFit(1.0 / slope, slope, float(np.exp(intercept)), float(t_in[0]),
                      float(t_in[-1]), r_squared, stderr, np.exp(sample_log_t), residuals)
    if fit.poor:
        logger.warning("power-law fit has R^2 = %.3f; data may not be algebraic", r_squared)
    return fit


@dataclass
class AlphaRow:
    ratio: float
    gamma: float
    omega: float
    engine: str
    fit: PowerLawFit | None
    error: str | None = None
    series: TimeSeries | None = field(default=None, repr=False)

    @property
    def alpha(self) -> float:
        return self.fit.alpha if self.fit is not None else float("nan")


def alpha_sweep(ratios, r_g_target: float, c6: float, engine, n_sites: int = 8,
                initial: str | None = None, times: np.ndarray | None = None,
                **engine_options) -> list[AlphaRow]:
    """Run ``engine`` at the matched parameters of every ratio and fit its growth.

    ``engine`` is an engine name understood by :func:`rydlattice.engines.run_engine`
    or a mapping from ratio to engine name. Ratio 0 is skipped since coherent
    growth oscillates and has no power law.
    """
    from .blockade import matched_pairs
    from .core import LatticeModel
    from .engines import default_initial, log_grid, run_engine

    rows = []
    for ratio in ratios:
        ratio = float(ratio)
        gamma, omega = matched_pairs(r_g_target, ratio, c6)
        name = engine[ratio] if isinstance(engine, dict) else engine
        if ratio == 0:
            rows.append(AlphaRow(ratio, gamma, omega, name, None, "coherent run has no fit"))
            continue
        model = LatticeModel(n_sites, c6, omega, gamma)
        grid = times if times is not None else log_grid(model)
        state = initial or default_initial(n_sites)
        try:
            series = run_engine(name, model, state, grid, **engine_options)
            rows.append(AlphaRow(ratio, gamma, omega, name, fit_power_law(series),
                                 series=series))
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            logger.warning("alpha sweep failed at ratio %g: %s", ratio, exc)
            rows.append(AlphaRow(ratio, gamma, omega, name, None, str(exc)))
    return rows


def alpha_trend_holds(alphas, max_inversions: int = 1) -> bool:
    """alpha non-increasing along increasing ratio, allowing ``max_inversions`` adjacent rises."""
    values = np.asarray(alphas, dtype=float)
    if np.any(~np.isfinite(values)):
        return False
    return int(np.sum(np.diff(values) > 0)) <= max_inversions
