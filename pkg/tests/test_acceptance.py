"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (printed in the terminal summary) before
asserting, so failures are reported with their measured values. The N = 8
master-equation runs are shared through session fixtures.
"""

import subprocess
import sys

import numpy as np
import pytest

from rydlattice.analysis import alpha_trend_holds, default_window, fit_power_law
from rydlattice.blockade import (find_r_G, interpolated_r_G, matched_pairs,
                                 validation_grid)
from rydlattice.core import DensityMatrix, LatticeModel
from rydlattice.engines import log_grid, master_series, run_engine
from rydlattice.master import build_generator, lindblad_rhs
from rydlattice.meanfield import measure_slope

from conftest import record_criterion

pytestmark = pytest.mark.acceptance

C6 = 160.0
REFERENCE = (0.01, 0.1)  # (omega, gamma) defining the common r_G
INITIAL8 = "ggggeggg"
MASTER_RATIOS = (0.0, 1.0, 10.0, 20.0, 30.0)
TRACE_LIMIT = 1e-9
EIGENVALUE_LIMIT = -1e-8

# integration diagnostics of every master run made by this module
DIAGNOSTICS = {}


def r_g_reference():
    return interpolated_r_G(*REFERENCE, C6)


def matched_model(ratio, n_sites=8):
    gamma, omega = matched_pairs(r_g_reference(), ratio, C6)
    return LatticeModel(n_sites, C6, omega, gamma)


def note_diagnostics(label, series):
    DIAGNOSTICS[label] = (series.metadata["max_trace_drift"], series.metadata["min_eigenvalue"])


@pytest.fixture(scope="session")
def master_runs():
    runs = {}
    for ratio in MASTER_RATIOS:
        model = matched_model(ratio)
        series = master_series(model, INITIAL8, log_grid(model))
        note_diagnostics(f"N=8 ratio {ratio:g}", series)
        runs[ratio] = series
    return runs


def test_criterion_01_blockade_anchor():
    interp = interpolated_r_G(*REFERENCE, C6)
    bisected = find_r_G(*REFERENCE, C6)
    passed = abs(interp - 3.566) <= 1e-3 and abs(bisected - 3.566) <= 0.02
    record_criterion("criterion 01 blockade anchor", passed,
                     f"interpolated r_G = {interp:.5f}, bisected r_G = {bisected:.5f} "
                     "(targets 3.566 +- 0.001 / +- 0.02)")
    assert passed


@pytest.mark.slow
def test_criterion_02_interpolation_validity():
    values = np.logspace(-3, 1, 5)
    grid = validation_grid(values, values, C6, bisect_radius=False)
    ratios = [c.gamma / c.omega for c in grid.cells]
    failed = [c for c in grid.cells if c.error is not None]
    deviation = grid.max_deviation if grid.ok_cells else float("inf")
    passed = (len(grid.cells) >= 25 and not failed and deviation <= 0.02
              and min(ratios) <= 1e-4 * (1 + 1e-9) and max(ratios) >= 1e4 * (1 - 1e-9))
    record_criterion("criterion 02 interpolation validity", passed,
                     f"{len(grid.cells)} cells, gamma/omega in [{min(ratios):.0e}, "
                     f"{max(ratios):.0e}], max |ratio - 1/2| / (1/2) = {100 * deviation:.3f}% "
                     f"(bound 1.6% + 0.4%), failed cells = {len(failed)}")
    assert passed


def test_criterion_03_matched_pair():
    gamma, omega = matched_pairs(r_g_reference(), 0.1, C6)
    err_omega = abs(omega - 0.020869) / 0.020869
    err_gamma = abs(gamma - 0.0020869) / 0.0020869
    passed = err_omega <= 1e-3 and err_gamma <= 1e-3
    record_criterion("criterion 03 matched pair", passed,
                     f"omega = {omega:.7f} ({100 * err_omega:.3f}% off 0.020869), "
                     f"gamma = {gamma:.8f} ({100 * err_gamma:.3f}% off 0.0020869), bound 0.1%")
    assert passed


@pytest.mark.slow
def test_criterion_04_qjmc_matches_master():
    model = LatticeModel(6, C6, REFERENCE[0], REFERENCE[1])
    times = np.concatenate([[0.0], np.logspace(0, 4, 41)])
    ensemble = run_engine("qjmc", model, "ggggeg", times, seed=0, trajectories=2000)
    exact = master_series(model, "ggggeg", times)
    note_diagnostics("N=6 ratio 10", exact)
    deviation = np.abs(ensemble["N_e"] - exact["N_e"])
    se = ensemble["N_e_se"]
    # points where both agree to integration accuracy need no error bar
    within = (deviation <= 3 * se) | (deviation <= 1e-9)
    worst = np.argmax(np.where(se > 0, deviation / np.where(se > 0, se, 1.0), 0.0))
    passed = bool(within.all()) and deviation.max() < 0.05
    outside = times[~within]
    record_criterion("criterion 04 qjmc vs master", passed,
                     f"{int((~within).sum())}/{len(times)} grid points beyond 3 SE "
                     f"(t = {', '.join(f'{t:.3g}' for t in outside[:10])}), worst "
                     f"{deviation[worst] / se[worst]:.1f} SE at t = {times[worst]:.3g}; "
                     f"max |dN_e| = {deviation.max():.4f} (bound 0.05)")
    assert passed


@pytest.mark.slow
def test_criterion_05_kmc_matches_master(master_runs):
    master = master_runs[30.0]
    t0, t1 = default_window(master.times, master["N_e"], 8)
    keep = master.times <= t1
    kmc = run_engine("kmc", matched_model(30.0), INITIAL8, master.times[keep], seed=0,
                     trajectories=10_000)
    window = (master.times[keep] >= t0) & (master.times[keep] <= t1)
    deviation = np.abs(kmc["N_e"] - master["N_e"][keep])[window]
    passed = deviation.max() < 0.15
    record_criterion("criterion 05 kmc vs master", passed,
                     f"growth window [{t0:.3g}, {t1:.3g}], {int(window.sum())} points, "
                     f"max |dN_e| = {deviation.max():.4f} (bound 0.15)")
    assert passed


def test_criterion_06_growth_exponent(master_runs):
    fit = fit_power_law(master_runs[30.0])
    times = np.logspace(0, 8, 81)
    synthetic = fit_power_law(times, (1.0, 1e8), values=2.0 * times ** (1 / 13))
    synthetic_ok = abs(synthetic.alpha - 13) / 13 <= 1e-4
    passed = 13 <= fit.alpha <= 19 and synthetic_ok
    record_criterion("criterion 06 growth exponent", passed,
                     f"ratio 30 alpha = {fit.alpha:.2f} over [{fit.t_min:.3g}, {fit.t_max:.3g}] "
                     f"({fit.decades:.1f} decades, R^2 = {fit.r_squared:.3f}), target [13, 19]; "
                     f"synthetic alpha = {synthetic.alpha:.6f}")
    assert passed


def test_criterion_07_meanfield_exponent():
    gamma = 1e-5
    results = {ratio: measure_slope(gamma / ratio, gamma, C6) for ratio in (0.1, 1.0, 10.0)}
    slopes = np.array([r.slope for r in results.values()])
    spread = (slopes.max() - slopes.min()) / slopes.mean()
    passed = (all(r.relative_error <= 0.05 and r.decades >= 1.0 for r in results.values())
              and spread < 0.02)
    detail = ", ".join(f"ratio {k:g}: slope 1/{1 / r.slope:.2f} over {r.decades:.1f} decades"
                       for k, r in results.items())
    record_criterion("criterion 07 mean-field exponent", passed,
                     f"{detail}; spread {100 * spread:.3f}% (bounds 5% / 2%)")
    assert passed


@pytest.mark.slow
def test_criterion_08_stationarity_and_conservation(master_runs):
    fixed_point = max(
        float(np.abs(lindblad_rhs(DensityMatrix.fully_mixed(n),
                                  build_generator(LatticeModel(n, C6, omega, gamma)))).max())
        for n in (1, 2, 3, 4) for omega, gamma in ((0.01, 0.1), (0.3, 0.0), (1.0, 2.0)))
    finals = {f"master ratio {r:g}": master_runs[r]["N_e"][-1] for r in MASTER_RATIOS if r > 0}
    # stochastic engines at fast-relaxing N = 8 parameters, time-averaged once stationary
    fast = LatticeModel(8, 1.0, 0.5, 1.0)
    late = np.linspace(0.0, 40.0, 41)
    for engine, method, count in (("qjmc", None, 1000), ("kmc", "gillespie", 2000)):
        series = run_engine(engine, fast, INITIAL8, late, seed=0, trajectories=count,
                            method=method)
        finals[f"{engine} (C6=1, omega=0.5, gamma=1)"] = series["N_e"][late >= 20].mean()
    model30 = matched_model(30.0)
    grid = np.concatenate([[0.0], np.logspace(10, 13, 13)])
    sampled = run_engine("kmc", model30, INITIAL8, grid, seed=0, trajectories=2000,
                         method="grid")
    finals["kmc grid sampler ratio 30"] = sampled["N_e"][grid >= 1e11].mean()
    worst_trace = max(v[0] for v in DIAGNOSTICS.values())
    worst_eig = min(v[1] for v in DIAGNOSTICS.values())
    stationary = {k: abs(v - 4.0) / 4.0 for k, v in finals.items()}
    passed = (fixed_point <= 1e-14 and worst_trace < TRACE_LIMIT
              and worst_eig > EIGENVALUE_LIMIT and max(stationary.values()) <= 0.01)
    record_criterion("criterion 08 stationarity and conservation", passed,
                     f"fixed-point residual {fixed_point:.1e}; over {len(DIAGNOSTICS)} runs "
                     f"trace drift {worst_trace:.1e}, min eigenvalue {worst_eig:.1e}; "
                     "N_e/(N/2) - 1: " + ", ".join(f"{k} {100 * v:.2f}%"
                                                  for k, v in stationary.items()))
    assert passed


def early_growth_mask(series):
    """From N_e first exceeding 1.05 N_e(0) until it first reaches 1.5 N_e(0)."""
    n_e = series["N_e"]
    start = np.flatnonzero(n_e > 1.05 * n_e[0])[0]
    stop = np.flatnonzero(n_e >= 1.5 * n_e[0])[0]
    mask = np.zeros(len(n_e), dtype=bool)
    mask[start:stop + 1] = True
    return mask


def test_criterion_09_correlation_signs(master_runs):
    parts = []
    passed = True
    for ratio in (1.0, 10.0):
        series = master_runs[ratio]
        corr = series["C(3)"]
        early = early_growth_mask(series)
        after = np.flatnonzero(early)[-1]
        not_stationary = np.abs(series["N_e"] - 4.0) > 0.04
        positive = corr[after:][not_stationary[after:]].max()
        final = abs(corr[-1])
        ok = corr[early].max() < 0 and positive > 0 and final <= 1e-3
        passed &= bool(ok)
        parts.append(f"ratio {ratio:g}: max early C = {corr[early].max():.2e}, "
                     f"max later C = {positive:.2e}, |C(final)| = {final:.1e}")
    coherent = master_runs[0.0]["C(3)"][master_runs[0.0].times > 0]
    fraction = float(np.mean(coherent <= 0))
    passed &= fraction >= 0.9
    parts.append(f"coherent run C <= 0 at {100 * fraction:.1f}% of times")
    record_criterion("criterion 09 correlation signs", passed, "; ".join(parts))
    assert passed


def run_cli_twice(tmp_path, args):
    outputs = []
    for label in ("first", "second"):
        out = tmp_path / label
        subprocess.run([sys.executable, "-m", "rydlattice.cli", "run", "--out", str(out), *args],
                       check=True, capture_output=True)
        outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    return outputs


def test_criterion_10_determinism(tmp_path):
    configs = {
        "qjmc": ["--kind", "qjmc", "--n-sites", "5", "--t-max", "500", "--trajectories", "40",
                 "--seed", "123", "--set", "grid.samples=21", "--set", "model.initial=ggegg"],
        "qjmc-single": ["--kind", "qjmc", "--n-sites", "5", "--t-max", "500",
                        "--trajectories", "1", "--seed", "5", "--set", "grid.samples=21",
                        "--set", "model.initial=ggegg"],
        "kmc": ["--kind", "kmc", "--n-sites", "6", "--t-max", "1e5", "--trajectories", "300",
                "--seed", "77", "--set", "grid.samples=21", "--set", "model.initial=ggeggg"],
    }
    identical = {}
    for name, args in configs.items():
        first, second = run_cli_twice(tmp_path / name, args)
        identical[name] = bool(first) and first == second
    passed = all(identical.values())
    record_criterion("criterion 10 determinism", passed,
                     ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}"
                               for k, v in identical.items()))
    assert passed


def test_criterion_11_alpha_trend(master_runs):
    ratios = (1.0, 10.0, 20.0, 30.0)
    alphas = [fit_power_law(master_runs[r]).alpha for r in ratios]
    passed = alpha_trend_holds(alphas, max_inversions=1)
    record_criterion("criterion 11 alpha trend (note)", passed,
                     ", ".join(f"ratio {r:g}: alpha {a:.2f}" for r, a in zip(ratios, alphas))
                     + " (non-increasing with at most one inversion)")
    assert passed
