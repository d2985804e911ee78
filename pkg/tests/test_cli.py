import json

import numpy as np
import pytest

from rydlattice.artifacts import (HASH_PREFIX, config_hash, format_number, read_csv,
                                  write_csv, write_json)
from rydlattice.cli import (EXIT_CONFIG, EXIT_ENGINE, ConfigError, figure_presets, main,
                            make_grid, resolve)


def run(tmp_path, *args):
    return main(["run", "--out", str(tmp_path), *args])


def test_format_number_is_locale_free_and_twelve_digits():
    assert format_number(1 / 3) == "0.333333333333"
    assert format_number(1.5e-20) == "1.5e-20"
    assert format_number(7) == "7"
    assert format_number(float("nan")) == "nan"


def test_csv_round_trip(tmp_path):
    path = write_csv(tmp_path / "x.csv", ["a", "b"], [(1.0, 2.5), (3.0, -1e-9)], "abc")
    lines = path.read_text().splitlines()
    assert lines[0] == HASH_PREFIX + "abc"
    assert lines[1] == "a,b"
    header, data = read_csv(path)
    assert header == ["a", "b"] and np.allclose(data, [[1.0, 2.5], [3.0, -1e-9]])


def test_json_is_written_atomically(tmp_path):
    write_json(tmp_path / "m.json", {"x": np.float64(1.0), "y": float("inf")})
    assert json.loads((tmp_path / "m.json").read_text()) == {"x": 1.0, "y": None}
    assert [p.name for p in tmp_path.iterdir()] == ["m.json"]


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_master_run_writes_data_and_manifest(tmp_path):
    status = run(tmp_path, "--kind", "master", "--n-sites", "4", "--t-max", "50",
                 "--set", "grid.samples=11", "--set", "model.initial=ggeg")
    assert status == 0
    manifest = json.loads((tmp_path / "master.manifest.json").read_text())
    assert set(manifest["outputs"]) == {"master.csv", "master_density.csv"}
    header, data = read_csv(tmp_path / "master.csv")
    assert header[:4] == ["time", "N_e", "N_e/N", "C(3)"] and data.shape == (11, 8)
    first = (tmp_path / "master.csv").read_text().splitlines()[0]
    assert first == HASH_PREFIX + manifest["config_hash"]


def test_seeded_runs_are_byte_identical(tmp_path):
    args = ("--kind", "qjmc", "--n-sites", "4", "--t-max", "40", "--trajectories", "30",
            "--seed", "9", "--set", "grid.samples=9", "--set", "model.initial=gegg")
    assert run(tmp_path / "a", *args) == 0
    assert run(tmp_path / "b", *args, "--threads", "2") == 0
    for name in ("qjmc.csv", "qjmc_density.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_zero_trajectories_is_a_config_error_without_artifacts(tmp_path, capsys):
    status = run(tmp_path / "out", "--kind", "qjmc", "--trajectories", "0")
    assert status == EXIT_CONFIG
    assert "engine.trajectories" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("raw, field", [
    ({"run": {"kind": "bogus"}}, "run.kind"),
    ({"run": {"kind": "master"}, "model": {"gamma": "-1"}}, "model.gamma"),
    ({"run": {"kind": "master"}, "model": {"n_sites": "x"}}, "model.n_sites"),
    ({"run": {"kind": "master"}, "model": {"ratio": "10", "gamma": "0.1"}}, "model.ratio"),
    ({"run": {"kind": "master"}, "colour": {"x": "1"}}, "colour"),
])
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigError) as info:
        resolve(raw)
    assert any(field in problem for problem in info.value.problems)


def test_ratio_and_radius_derive_the_matched_pair():
    config = resolve({"run": {"kind": "master"}, "model": {"ratio": "0.1", "r_g": "3.566"}})
    model = config.model()
    assert model.gamma == pytest.approx(0.1 * model.omega)


def test_engine_failure_exits_nonzero(tmp_path, capsys):
    # a flat curve has no growth to fit
    write_csv(tmp_path / "flat.csv", ["time", "N_e"],
              [(t, 1.0) for t in np.logspace(0, 3, 30)], "x")
    status = run(tmp_path, "--kind", "fit", "--set", f"fit.input={tmp_path / 'flat.csv'}",
                 "--set", "fit.t_min=1", "--set", "fit.t_max=1000")
    assert status == EXIT_ENGINE
    assert "error" in capsys.readouterr().err


def test_validate_prints_resolved_config(capsys):
    assert main(["validate", "--kind", "kmc", "--gamma", "0.3"]) == 0
    out = capsys.readouterr().out
    assert "[model]" in out and "gamma = 0.3" in out


def test_make_grid():
    assert len(make_grid("linear", 10.0, 400)) == 400
    grid = make_grid("log", 1e4, 21)
    assert grid[0] == 0.0 and grid[-1] == pytest.approx(1e4)


def test_fig3_preset_contents():
    runs = figure_presets("fig3")
    kinds = {(r["run"]["kind"], r["model"].get("ratio")) for r in runs}
    assert {("master", repr(x)) for x in (0.0, 1.0, 10.0, 20.0, 30.0)} <= kinds
    qjmc = [r for r in runs if r["run"]["kind"] == "qjmc"]
    assert [r["model"]["ratio"] for r in qjmc] == ["0.1"]
    assert qjmc[0]["engine"]["trajectories"] == "1000"
    kmc = [r for r in runs if r["run"]["kind"] == "kmc"]
    assert kmc[0]["engine"]["trajectories"] == "10000"


def test_fig5_preset_pins_site_eight_excited():
    for raw in figure_presets("fig5"):
        assert raw["model"]["pinned"] == "8:e"
        assert resolve(raw).model().pinned_sites == frozenset({(8, 1)})


def test_appendix_preset_lengths_and_ratios():
    pairs = {(r["model"]["n_sites"], float(r["model"]["ratio"]))
             for r in figure_presets("appendix")}
    assert pairs == {(str(n), x) for n in (6, 7, 8) for x in (0.1, 1.0, 10.0)}


def test_fig1_preset_uses_matched_coherent_pair():
    gammas = sorted(float(r["model"]["gamma"]) for r in figure_presets("fig1"))
    assert gammas == [0.0020869, 0.1]


def test_every_preset_resolves():
    for name in ("fig1", "fig2", "fig3", "fig4", "fig5", "appendix"):
        for raw in figure_presets(name):
            resolve(raw)
    with pytest.raises(ValueError):
        figure_presets("fig9")


def test_preset_command_writes_ini_files(tmp_path):
    assert main(["preset", "fig5", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.ini"))) == 3


def test_config_file_with_inline_comments_and_flag_override(tmp_path, capsys):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nkind = kmc\n\n[model]\nn_sites = 6  ; chain length\n"
                    "gamma = 0.5\n")
    assert main(["validate", "--config", str(path), "--gamma", "0.25"]) == 0
    out = capsys.readouterr().out
    assert "n_sites = 6\n" in out and "gamma = 0.25\n" in out
