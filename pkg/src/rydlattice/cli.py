"""Command-line experiment runner.

Configurations are INI files with one section per concern (run, model, grid,
engine and one per experiment kind). Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import alpha_sweep, alpha_trend_holds, fit_power_law
from .artifacts import (config_hash, read_csv, write_csv, write_density_map, write_json,
                        write_series)
from .blockade import (GRID_COLUMNS, BlockadeScan, find_r_G, interpolated_r_G,
                       matched_pairs, rabi_cycle_average, saturation_value, validation_grid)
from .core import LatticeModel, fock_state
from .engines import default_initial, run_engine
from .meanfield import integrate_density, measure_slope
from .observables import TimeSeries, site_density_map
from .qjmc import TrajectorySettings, qjmc_trajectory, trajectory_rng

logger = logging.getLogger(__name__)

KINDS = ("master", "qjmc", "kmc", "blockade-scan", "blockade-grid", "meanfield", "fit",
         "sweep")
PRESETS = ("fig1", "fig2", "fig3", "fig4", "fig5", "appendix")
REFERENCE_GAMMA = 0.1
REFERENCE_OMEGA = 0.01
PAPER_C6 = 160.0
FIG1_COHERENT_PAIR = (0.0020869, 0.020869)
EXIT_CONFIG = 2
EXIT_ENGINE = 1

# section -> key -> (type, default); None marks "unset"
SCHEMA = {
    "run": {"kind": (str, None), "name": (str, None), "seed": (int, 0),
            "out": (str, "results"), "threads": (int, 1)},
    "model": {"n_sites": (int, 8), "gamma": (float, REFERENCE_GAMMA),
              "omega": (float, REFERENCE_OMEGA), "c6": (float, PAPER_C6),
              "initial": (str, None), "pinned": (str, ""), "ratio": (float, None),
              "r_g": (float, None)},
    "grid": {"t_max": (float, 1000.0), "samples": (int, 400), "spacing": (str, "linear"),
             "t_min": (float, 0.1)},
    "engine": {"method": (str, None), "trajectories": (int, None), "record": (str, "full"),
               "rtol": (float, 1e-8), "atol": (float, 1e-10)},
    "blockade": {"r_min": (float, 0.5), "r_max": (float, 10.0), "r_points": (int, 101),
                 "gamma_min": (float, 1e-3), "gamma_max": (float, 10.0),
                 "omega_min": (float, 1e-3), "omega_max": (float, 10.0),
                 "grid_points": (int, 5), "bisect": (bool, True)},
    "meanfield": {"nu0": (float, 1e-3)},
    "fit": {"input": (str, None), "channel": (str, "N_e"), "t_min": (float, None),
            "t_max": (float, None), "n_sites": (int, None)},
    "sweep": {"ratios": (list, [1.0, 10.0, 20.0, 30.0]), "engine": (str, "master")},
}
KIND_DEFAULTS = {"sweep": {"grid": {"spacing": "log", "t_max": 1e14, "samples": 151}}}
METHODS = {"master": ("long-time", "rk45"), "kmc": ("gillespie", "grid")}
DEFAULT_TRAJECTORIES = {"qjmc": 1000, "kmc": 10000}
# Keys that never change the data files and so stay out of the hash.
UNHASHED = {("run", "out"), ("run", "threads")}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def _parse(kind, text: str):
    text = text.strip()
    if kind is bool:
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is list:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    return kind(text)


def _unparse(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(f"{v:g}" for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    """Typed, validated configuration; ``explicit`` lists the keys given by the user."""

    values: dict
    explicit: set = field(default_factory=set)

    def __getitem__(self, key: str):
        section, name = key.split(".")
        return self.values[section][name]

    @property
    def kind(self) -> str:
        return self["run.kind"]

    @property
    def name(self) -> str:
        return self["run.name"] or self.kind

    def model(self) -> LatticeModel:
        pins = frozenset(_parse_pins(self["model.pinned"]))
        return LatticeModel(self["model.n_sites"], self["model.c6"], self["model.omega"],
                            self["model.gamma"], pins)

    def times(self) -> np.ndarray:
        return make_grid(self["grid.spacing"], self["grid.t_max"], self["grid.samples"],
                         self["grid.t_min"])

    def hashed(self) -> dict:
        return {s: {k: v for k, v in keys.items() if (s, k) not in UNHASHED}
                for s, keys in self.values.items()}

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        for section, keys in self.values.items():
            items = {k: _unparse(v) for k, v in keys.items()
                     if v is not None and f"{section}.{k}" in self.explicit}
            if items:
                parser[section] = items
        lines = []
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in parser[section].items())
            lines.append("")
        return "\n".join(lines)


def _parse_pins(text: str) -> list[tuple[int, int]]:
    """'8:e, 1:g' -> [(8, 1), (1, 0)]; levels may be g/e or 0/1."""
    pins = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        site, level = item.split(":")
        level = level.strip().lower()
        level = {"g": 0, "e": 1}.get(level, level)
        pins.append((int(site), int(level)))
    return pins


def make_grid(spacing: str, t_max: float, samples: int, t_min: float = 0.1) -> np.ndarray:
    """Linear grid from 0, or 0 followed by log-spaced samples from t_min."""
    if spacing == "linear":
        return np.linspace(0.0, t_max, samples)
    if spacing == "log":
        return np.concatenate([[0.0], np.logspace(np.log10(t_min), np.log10(t_max),
                                                  samples - 1)])
    raise ValueError(f"unknown grid spacing {spacing!r}")


def resolve(raw: dict) -> RunConfig:
    """Type-convert, fill defaults and validate a section -> key -> text mapping."""
    problems = []
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    explicit = set()
    for section, keys in raw.items():
        if section not in SCHEMA:
            problems.append(f"{section}: unknown section")
            continue
        for key, text in keys.items():
            if key not in SCHEMA[section]:
                problems.append(f"{section}.{key}: unknown key")
                continue
            kind = SCHEMA[section][key][0]
            try:
                values[section][key] = text if not isinstance(text, str) else _parse(kind, text)
                explicit.add(f"{section}.{key}")
            except ValueError as exc:
                problems.append(f"{section}.{key}: {exc}")
    kind = values["run"]["kind"]
    if kind not in KINDS:
        problems.append(f"run.kind: must be one of {', '.join(KINDS)}, got {kind!r}")
        raise ConfigError(problems)
    for section, keys in KIND_DEFAULTS.get(kind, {}).items():
        for key, value in keys.items():
            if f"{section}.{key}" not in explicit:
                values[section][key] = value
    if problems:
        raise ConfigError(problems)
    config = RunConfig(values, explicit)
    _derive(config, problems)
    _validate(config, problems)
    if problems:
        raise ConfigError(problems)
    return config


def _derive(config: RunConfig, problems: list) -> None:
    model, engine = config.values["model"], config.values["engine"]
    if model["ratio"] is not None:
        if {"model.gamma", "model.omega"} & config.explicit:
            problems.append("model.ratio: cannot be combined with model.gamma or model.omega")
            return
        if model["ratio"] < 0 or not model["c6"] > 0:
            return
        r_g = model["r_g"]
        if r_g is None:
            r_g = interpolated_r_G(REFERENCE_OMEGA, REFERENCE_GAMMA, model["c6"])
        model["gamma"], model["omega"] = matched_pairs(r_g, model["ratio"], model["c6"])
    if model["initial"] is None and model["n_sites"] >= 1:
        pins = dict(_safe_pins(model["pinned"]))
        base = default_initial(model["n_sites"])
        model["initial"] = "".join("ge"[pins[k + 1]] if k + 1 in pins else c
                                   for k, c in enumerate(base))
    kind = config.kind
    if engine["method"] is None and kind in METHODS:
        engine["method"] = METHODS[kind][0]
    if engine["trajectories"] is None and kind in DEFAULT_TRAJECTORIES:
        engine["trajectories"] = DEFAULT_TRAJECTORIES[kind]


def _safe_pins(text):
    try:
        return _parse_pins(text)
    except ValueError:
        return []


def _validate(config: RunConfig, problems: list) -> None:
    v = config.values
    kind = config.kind

    def need(cond, key, message):
        if not cond:
            problems.append(f"{key}: {message}")

    need(v["run"]["seed"] >= 0, "run.seed", "must be non-negative")
    need(v["run"]["threads"] >= 1, "run.threads", "must be at least 1")
    need(v["model"]["n_sites"] >= 1, "model.n_sites", "must be at least 1")
    need(v["model"]["c6"] > 0, "model.c6", "must be positive")
    need(v["model"]["gamma"] >= 0, "model.gamma", "must be non-negative")
    need(v["model"]["omega"] >= 0, "model.omega", "must be non-negative")
    if v["model"]["ratio"] is not None:
        need(v["model"]["ratio"] >= 0, "model.ratio", "must be non-negative")
    try:
        _parse_pins(v["model"]["pinned"])
    except ValueError:
        problems.append("model.pinned: expected entries like '8:e'")
    if problems:
        return
    try:
        model = config.model()
        fock_state(model, v["model"]["initial"])
    except (ValueError, IndexError) as exc:
        problems.append(f"model: {exc}")
    g = v["grid"]
    need(g["spacing"] in ("linear", "log"), "grid.spacing", "must be 'linear' or 'log'")
    need(g["t_max"] > 0, "grid.t_max", "must be positive")
    need(g["samples"] >= 2, "grid.samples", "must be at least 2")
    if g["spacing"] == "log":
        need(0 < g["t_min"] < g["t_max"], "grid.t_min", "must lie in (0, t_max)")
    e = v["engine"]
    if kind in METHODS:
        need(e["method"] in METHODS[kind], "engine.method",
             f"must be one of {', '.join(METHODS[kind])}")
    if kind in ("qjmc", "kmc"):
        need(e["trajectories"] >= 1, "engine.trajectories", "must be at least 1")
    if kind == "qjmc":
        need(e["record"] in ("full", "observables"), "engine.record",
             "must be 'full' or 'observables'")
    if kind in ("kmc", "meanfield"):
        need(v["model"]["gamma"] > 0, "model.gamma", f"{kind} needs gamma > 0")
    if kind in ("blockade-scan", "blockade-grid"):
        b = v["blockade"]
        need(0 < b["r_min"] < b["r_max"], "blockade.r_min", "must lie in (0, r_max)")
        need(b["r_points"] >= 2, "blockade.r_points", "must be at least 2")
        need(0 < b["gamma_min"] <= b["gamma_max"], "blockade.gamma_min",
             "must lie in (0, gamma_max]")
        need(0 < b["omega_min"] <= b["omega_max"], "blockade.omega_min",
             "must lie in (0, omega_max]")
        need(b["grid_points"] >= 1, "blockade.grid_points", "must be at least 1")
        if kind == "blockade-scan":
            need(v["model"]["omega"] > 0, "model.omega", "blockade scan needs omega > 0")
    if kind == "meanfield":
        need(0 <= v["meanfield"]["nu0"] <= 1, "meanfield.nu0", "must lie in [0, 1]")
    if kind == "fit":
        f = v["fit"]
        need(f["input"] is not None, "fit.input", "path to a series CSV is required")
        need((f["t_min"] is None) == (f["t_max"] is None), "fit.t_min",
             "give both t_min and t_max or neither")
    if kind == "sweep":
        need(len(v["sweep"]["ratios"]) >= 1, "sweep.ratios", "needs at least one ratio")
        need(v["sweep"]["engine"] in ("master", "qjmc", "kmc"), "sweep.engine",
             "must be master, qjmc or kmc")


def read_config(path: str | None) -> dict:
    if path is None:
        return {}
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path):
        raise ConfigError([f"--config: cannot read {path}"])
    return {s: dict(parser[s]) for s in parser.sections()}


FLAG_KEYS = {"seed": "run.seed", "out": "run.out", "threads": "run.threads",
             "kind": "run.kind", "name": "run.name", "gamma": "model.gamma",
             "omega": "model.omega", "c6": "model.c6", "n_sites": "model.n_sites",
             "t_max": "grid.t_max", "trajectories": "engine.trajectories"}


def merge_flags(raw: dict, args: argparse.Namespace) -> dict:
    """Overlay command-line values on the file configuration."""
    merged = {s: dict(k) for s, k in raw.items()}
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            section, name = key.split(".")
            merged.setdefault(section, {})[name] = str(value)
    for item in getattr(args, "set", None) or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError([f"--set: expected section.key=value, got {item!r}"])
        key, value = item.split("=", 1)
        section, name = key.strip().split(".", 1)
        merged.setdefault(section, {})[name] = value
    return merged


@dataclass
class RunOutcome:
    outputs: list
    info: dict


def _engine_kind(config: RunConfig, out: Path, digest: str) -> RunOutcome:
    model = config.model()
    times = config.times()
    kind = config.kind
    initial = config["model.initial"]
    jumps = None
    if kind == "qjmc" and config["engine.trajectories"] == 1:
        settings = TrajectorySettings(times, count=1, seed=config["run.seed"],
                                      record=config["engine.record"])
        series, jumps = qjmc_trajectory(fock_state(model, initial), model, settings,
                                        trajectory_rng(config["run.seed"], 0))
        series.metadata["initial"] = initial
    elif kind == "master":
        series = run_engine("master", model, initial, times, method=config["engine.method"],
                            rtol=config["engine.rtol"], atol=config["engine.atol"])
    elif kind == "qjmc":
        series = run_engine("qjmc", model, initial, times, seed=config["run.seed"],
                            trajectories=config["engine.trajectories"],
                            threads=config["run.threads"], record=config["engine.record"])
    else:
        series = run_engine("kmc", model, initial, times, seed=config["run.seed"],
                            trajectories=config["engine.trajectories"],
                            method=config["engine.method"])
    outputs = [write_series(out / f"{config.name}.csv", series, digest)]
    if "density" in series:
        r_g = None
        if model.omega > 0 or model.gamma > 0:
            r_g = interpolated_r_G(model.omega, model.gamma, model.c6)
        dmap = site_density_map(series, r_g)
        outputs.append(write_density_map(out / f"{config.name}_density.csv", dmap, digest))
        series.metadata["density_map"] = dmap.metadata
    if jumps is not None:
        outputs.append(write_csv(out / f"{config.name}_jumps.csv", ["time", "site"],
                                 [(j.time, j.site) for j in jumps], digest))
    return RunOutcome(outputs, dict(series.metadata))


def _blockade_scan(config: RunConfig, out: Path, digest: str) -> RunOutcome:
    omega, gamma, c6 = config["model.omega"], config["model.gamma"], config["model.c6"]
    radii = np.linspace(config["blockade.r_min"], config["blockade.r_max"],
                        config["blockade.r_points"])
    scan = BlockadeScan(gamma, omega, c6, saturation_value(omega, gamma, c6))
    for r in radii:
        scan.add(r, rabi_cycle_average(omega, gamma, c6, r))
    rows = zip(scan.radii, scan.values, scan.ratios)
    outputs = [write_csv(out / f"{config.name}.csv", ["r", "n_bar", "n_bar_ratio"], rows,
                         digest)]
    info = {"gamma": gamma, "omega": omega, "c6": c6, "saturation": scan.saturation,
            "r_G_interp": interpolated_r_G(omega, gamma, c6)}
    if config["blockade.bisect"]:
        info["r_G_bisect"] = find_r_G(omega, gamma, c6)
    outputs.append(write_json(out / f"{config.name}_radius.json", info))
    return RunOutcome(outputs, info)


def _blockade_grid(config: RunConfig, out: Path, digest: str) -> RunOutcome:
    n = config["blockade.grid_points"]
    gammas = np.geomspace(config["blockade.gamma_min"], config["blockade.gamma_max"], n)
    omegas = np.geomspace(config["blockade.omega_min"], config["blockade.omega_max"], n)
    grid = validation_grid(gammas, omegas, config["model.c6"], config["blockade.bisect"])
    outputs = [write_csv(out / f"{config.name}.csv", GRID_COLUMNS, grid.rows(), digest)]
    failed = [c for c in grid.cells if c.error is not None]
    info = {"cells": len(grid.cells), "failed_cells": len(failed),
            "max_relative_deviation": grid.max_deviation if grid.ok_cells else None}
    outputs.append(write_json(out / f"{config.name}_summary.json", info))
    return RunOutcome(outputs, info)


def _meanfield(config: RunConfig, out: Path, digest: str) -> RunOutcome:
    omega, gamma, c6 = config["model.omega"], config["model.gamma"], config["model.c6"]
    times = config.times()
    nu = integrate_density(config["meanfield.nu0"], omega, gamma, c6, times)
    outputs = [write_csv(out / f"{config.name}.csv", ["time", "nu"], zip(times, nu), digest)]
    try:
        report = measure_slope(omega, gamma, c6, config["meanfield.nu0"]).to_dict()
    except ValueError as exc:
        report = {"slope": None, "reason": str(exc)}
    outputs.append(write_json(out / f"{config.name}_slope.json", report))
    return RunOutcome(outputs, report)


def _fit(config: RunConfig, out: Path, digest: str) -> RunOutcome:
    header, data = read_csv(Path(config["fit.input"]))
    channel = config["fit.channel"]
    if "time" not in header or channel not in header:
        raise ValueError(f"{config['fit.input']} lacks a time or {channel!r} column")
    n_sites = config["fit.n_sites"] or sum(h.startswith("n_") for h in header)
    series = TimeSeries(data[:, header.index("time")],
                        {channel: data[:, header.index(channel)]}, {"n_sites": n_sites})
    window = None
    if config["fit.t_min"] is not None:
        window = (config["fit.t_min"], config["fit.t_max"])
    fit = fit_power_law(series, window, channel=channel)
    report = {"input": config["fit.input"], "channel": channel, **fit.to_dict()}
    return RunOutcome([write_json(out / f"{config.name}_fit.json", report)], report)


def _sweep(config: RunConfig, out: Path, digest: str) -> RunOutcome:
    c6 = config["model.c6"]
    r_g = config["model.r_g"] or interpolated_r_G(REFERENCE_OMEGA, REFERENCE_GAMMA, c6)
    engine = config["sweep.engine"]
    options = {}
    if engine in ("qjmc", "kmc"):
        options = {"seed": config["run.seed"], "trajectories": config["engine.trajectories"]
                   or DEFAULT_TRAJECTORIES[engine]}
    rows = alpha_sweep(config["sweep.ratios"], r_g, c6, engine, config["model.n_sites"],
                       config["model.initial"], config.times(), **options)
    outputs = []
    for row in rows:
        if row.series is not None:
            outputs.append(write_series(out / f"{config.name}_ratio{row.ratio:g}.csv",
                                        row.series, digest))
    table = [(r.ratio, r.gamma, r.omega, r.engine, r.alpha,
              r.fit.r_squared if r.fit else float("nan"),
              r.fit.t_min if r.fit else float("nan"),
              r.fit.t_max if r.fit else float("nan")) for r in rows]
    outputs.insert(0, write_csv(out / f"{config.name}.csv",
                                ["ratio", "gamma", "omega", "engine", "alpha", "r_squared",
                                 "t_min", "t_max"], table, digest))
    fitted = [r.alpha for r in rows if r.fit is not None]
    report = {"r_G": r_g, "trend_holds": alpha_trend_holds(fitted) if fitted else None,
              "rows": [{"ratio": r.ratio, "gamma": r.gamma, "omega": r.omega,
                        "engine": r.engine, "error": r.error,
                        "fit": r.fit.to_dict() if r.fit else None} for r in rows]}
    outputs.append(write_json(out / f"{config.name}_fit.json", report))
    return RunOutcome(outputs, report)


HANDLERS = {"master": _engine_kind, "qjmc": _engine_kind, "kmc": _engine_kind,
            "blockade-scan": _blockade_scan, "blockade-grid": _blockade_grid,
            "meanfield": _meanfield, "fit": _fit, "sweep": _sweep}


def execute(config: RunConfig) -> Path:
    """Run one configuration; returns the manifest path."""
    out = Path(config["run.out"])
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config.hashed())
    started = time.time()
    outcome = HANDLERS[config.kind](config, out, digest)
    manifest = {"tool": "rydlattice", "version": __version__, "config": config.values,
                "config_hash": digest, "started": started,
                "wall_clock_s": time.time() - started,
                "outputs": [p.name for p in outcome.outputs], "info": outcome.info}
    return write_json(out / f"{config.name}.manifest.json", manifest)


def _ratio_name(ratio: float) -> str:
    return f"{ratio:g}".replace(".", "p")


def figure_presets(name: str) -> list[dict]:
    """Raw configurations reproducing the data behind each figure."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    log_long = {"spacing": "log", "t_min": "0.1", "t_max": "1e14", "samples": "151"}
    runs = []

    def add(kind, label, model, grid=None, engine=None, **sections):
        raw = {"run": {"kind": kind, "name": f"{name}_{label}"}, "model": model}
        if grid:
            raw["grid"] = grid
        if engine:
            raw["engine"] = engine
        raw.update(sections)
        runs.append(raw)

    if name == "fig1":
        add("qjmc", "ratio10", {"n_sites": "8", "gamma": "0.1", "omega": "0.01"},
            {"spacing": "log", "t_min": "1", "t_max": "1e6", "samples": "400"},
            {"trajectories": "1"})
        gamma, omega = FIG1_COHERENT_PAIR
        add("qjmc", "ratio0p1", {"n_sites": "8", "gamma": repr(gamma), "omega": repr(omega)},
            {"spacing": "log", "t_min": "1", "t_max": "1e6", "samples": "400"},
            {"trajectories": "1"})
    elif name == "fig2":
        for gamma in ("0.0001", "0.001", "0.01", "0.1"):
            add("blockade-scan", f"a_gamma{gamma}", {"c6": "80", "omega": "0.01",
                                                     "gamma": gamma},
                blockade={"r_min": "0.5", "r_max": "8", "r_points": "151"})
        for ratio in (10.0, 1.0, 0.1):
            add("blockade-scan", f"b_ratio{_ratio_name(ratio)}",
                {"c6": "80", "ratio": repr(ratio)},
                blockade={"r_min": "0.5", "r_max": "8", "r_points": "151"})
        add("blockade-grid", "c_grid", {"c6": "80"},
            blockade={"gamma_min": "0.001", "gamma_max": "10", "omega_min": "0.001",
                      "omega_max": "10", "grid_points": "9"})
    elif name in ("fig3", "fig4"):
        ratios = (0.0, 1.0, 10.0, 20.0, 30.0) if name == "fig3" else (0.0, 1.0, 10.0, 30.0)
        for ratio in ratios:
            add("master", f"master_ratio{_ratio_name(ratio)}",
                {"n_sites": "8", "ratio": repr(ratio)}, log_long)
        if name == "fig3":
            add("qjmc", "qjmc_ratio0p1", {"n_sites": "8", "ratio": "0.1"},
                {"spacing": "log", "t_min": "0.1", "t_max": "1e5", "samples": "121"},
                {"trajectories": "1000"})
        add("kmc", "kmc_ratio30", {"n_sites": "8", "ratio": "30.0"},
            {"spacing": "log", "t_min": "0.1", "t_max": "1e10", "samples": "111"},
            {"trajectories": "10000"})
        if name == "fig3":
            add("sweep", "alpha", {"n_sites": "8"}, log_long,
                sweep={"ratios": "1, 10, 20, 30", "engine": "master"})
    elif name == "fig5":
        for ratio in (20.0, 1.0, 0.1):
            add("qjmc", f"ratio{_ratio_name(ratio)}",
                {"n_sites": "8", "ratio": repr(ratio), "pinned": "8:e",
                 "initial": "ggggggge"},
                {"spacing": "linear", "t_max": "10000", "samples": "400"},
                {"trajectories": "1", "record": "full"})
    else:
        for n_sites in (6, 7, 8):
            for ratio in (1.0, 10.0):
                add("master", f"N{n_sites}_ratio{_ratio_name(ratio)}",
                    {"n_sites": str(n_sites), "ratio": repr(ratio)}, log_long)
            add("qjmc", f"N{n_sites}_ratio0p1", {"n_sites": str(n_sites), "ratio": "0.1"},
                {"spacing": "log", "t_min": "0.1", "t_max": "1e5", "samples": "121"},
                {"trajectories": "1000"})
    return runs


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--kind", choices=KINDS)
    parser.add_argument("--name", help="file name stem for the artifacts")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--omega", type=float)
    parser.add_argument("--c6", type=float)
    parser.add_argument("--n-sites", dest="n_sites", type=int)
    parser.add_argument("--t-max", dest="t_max", type=float)
    parser.add_argument("--trajectories", type=int)
    parser.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override any configuration key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydlattice",
                                     description="Driven-dissipative Rydberg chain simulations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_overrides(sub.add_parser("run", help="run one configuration"))
    _add_overrides(sub.add_parser("validate", help="check a configuration and print it"))
    preset = sub.add_parser("preset", help="write (and optionally run) a figure preset")
    preset.add_argument("preset", choices=PRESETS)
    preset.add_argument("--out", default="results")
    preset.add_argument("--seed", type=int)
    preset.add_argument("--threads", type=int)
    preset.add_argument("--run", action="store_true", help="execute the preset runs")
    return parser


def _report_error(exc: Exception) -> None:
    if isinstance(exc, ConfigError):
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "preset":
        return _preset(args)
    try:
        config = resolve(merge_flags(read_config(args.config), args))
    except ConfigError as exc:
        _report_error(exc)
        return EXIT_CONFIG
    if args.command == "validate":
        print(config.to_ini(), end="")
        return 0
    try:
        manifest = execute(config)
    except Exception as exc:  # engine failures become a nonzero exit with context
        logger.debug("run failed", exc_info=True)
        _report_error(exc)
        return EXIT_ENGINE
    print(manifest)
    return 0


def _preset(args) -> int:
    out = Path(args.out)
    status = 0
    for raw in figure_presets(args.preset):
        raw["run"]["out"] = str(out)
        if args.seed is not None:
            raw["run"]["seed"] = str(args.seed)
        if args.threads is not None:
            raw["run"]["threads"] = str(args.threads)
        try:
            config = resolve(raw)
        except ConfigError as exc:
            _report_error(exc)
            return EXIT_CONFIG
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{config.name}.ini"
        path.write_text(config.to_ini())
        print(path)
        if args.run:
            try:
                print(execute(config))
            except Exception as exc:  # keep going so one failed run does not hide the rest
                _report_error(exc)
                status = EXIT_ENGINE
    return status


if __name__ == "__main__":
    sys.exit(main())
