"""CSV and JSON artifacts with deterministic formatting and an atomic run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .observables import DensityMap, TimeSeries, correlation_channel_name

SIGNIFICANT_DIGITS = 12
HASH_PREFIX = "# manifest_hash: "


def format_number(value) -> str:
    """Decimal with 12 significant digits, independent of locale."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{SIGNIFICANT_DIGITS}g}"


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_csv(path: Path, header, rows, manifest_hash: str) -> Path:
    """Hash comment line, header row, then formatted data rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(f"{HASH_PREFIX}{manifest_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    """Header and float data of a CSV written by :func:`write_csv`."""
    with open(path, newline="", encoding="ascii") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    return header, data.reshape(-1, len(header))


def series_columns(series: TimeSeries) -> tuple[list[str], np.ndarray]:
    """time, N_e, N_e/N, C(3), n_1..n_N and, for ensembles, N_e_se."""
    n = series.n_sites
    corr = correlation_channel_name()
    header = ["time", "N_e", "N_e/N", corr] + [f"n_{k}" for k in range(1, n + 1)]
    cols = [series.times, series["N_e"], series["N_e/N"],
            series[corr] if corr in series else np.full(len(series.times), np.nan)]
    dens = series["density"] if "density" in series else np.full((len(series.times), n),
                                                                  np.nan)
    cols.extend(dens.T)
    if "N_e_se" in series:
        header.append("N_e_se")
        cols.append(series["N_e_se"])
    return header, np.column_stack(cols)


def write_series(path: Path, series: TimeSeries, manifest_hash: str) -> Path:
    header, data = series_columns(series)
    return write_csv(path, header, data, manifest_hash)


def write_density_map(path: Path, density_map: DensityMap, manifest_hash: str) -> Path:
    return write_csv(path, ["t", "site", "value"], density_map.long_form(), manifest_hash)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_json(path: Path, payload: dict) -> Path:
    """Write JSON atomically (temporary file in the same directory, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
