"""Config parsing, registry dispatch, and exit codes."""

import dataclasses
import json
import subprocess
import sys

import pytest

from weyllab.cli import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    emit_config,
    main,
    parse_config,
    run,
)


def test_round_trip():
    cfg = parse_config("model = harmonic\nenergy = 1.0\nseed = 5\n")
    assert parse_config(emit_config(cfg)) == cfg


def test_empty_document_lists_missing_keys():
    with pytest.raises(ConfigError) as err:
        parse_config("")
    assert any("model" in v for v in err.value.violations)
    assert any("energy" in v for v in err.value.violations)


def test_comments_and_blank_lines():
    cfg = parse_config(
        "# experiment setup\nmodel = harmonic  # registry name\n\n"
        "energy = 1.0\n"
    )
    assert cfg.model == "harmonic"
    assert cfg.energy == 1.0


def test_delta0_open_interval_boundary():
    with pytest.raises(ConfigError) as err:
        parse_config("model=harmonic\nenergy=1\ndelta0=0.4\nr0=0.5\n")
    assert "open interval" in err.value.violations[0]
    cfg = parse_config("model=harmonic\nenergy=1\ndelta0=0.41\nr0=0.5\n")
    assert cfg.delta0 == 0.41


def test_critical_sweep_needs_larger_delta0():
    text = "model=double_well_2d\nenergy=1\ndelta0=0.3\nr0=2.0\n"
    parse_config(text)  # fine for generic experiments
    with pytest.raises(ConfigError) as err:
        parse_config(text, experiment="critical_sweep")
    assert "1/(4 m0 - 1)" in err.value.violations[0]


def test_unknown_key():
    with pytest.raises(ConfigError) as err:
        parse_config("model=harmonic\nenergy=1\nwavelength=3\n")
    assert "wavelength" in " ".join(err.value.violations)


def test_unknown_model():
    with pytest.raises(ConfigError) as err:
        parse_config("model=mystery\nenergy=1\n")
    assert "mystery" in " ".join(err.value.violations)


def test_registry_names():
    assert set(EXPERIMENTS) == {
        "weyl_sweep",
        "critical_sweep",
        "mollifier_rates",
        "sublevel_lemma",
        "flow_bounds",
        "oscillatory_decay",
        "smoothed_counting",
    }


def test_unknown_experiment_exit_2(tmp_path):
    cfg = ExperimentConfig(model="harmonic", energy=1.0,
                           out_dir=str(tmp_path))
    assert run(cfg, "nonexistent") == 2


def test_sublevel_run_writes_artifacts(tmp_path):
    cfg = dataclasses.replace(
        parse_config("model=harmonic\nenergy=1.0\ntrials=40\n"),
        out_dir=str(tmp_path),
    )
    assert run(cfg, "sublevel_lemma") == 0
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert verdict["verdict"] == "PASS"
    assert verdict["schema_version"] == 1
    assert (tmp_path / "sublevel_lemma.csv").read_text().startswith("degree,")


def test_main_config_error_exit_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("model=harmonic\nenergy=1\ndelta0=0.9\n")
    assert main(["--config", str(bad), "--experiment", "sublevel_lemma"]) == 2


def test_main_overrides_and_exit_0(tmp_path):
    cfgfile = tmp_path / "ok.cfg"
    cfgfile.write_text("model=harmonic\nenergy=1.0\ntrials=40\n")
    code = main([
        "--config", str(cfgfile), "--experiment", "sublevel_lemma",
        "--out", str(tmp_path / "out"), "--seed", "11",
    ])
    assert code == 0
    verdict = json.loads((tmp_path / "out" / "verdict.json").read_text())
    assert verdict["criteria"][0]["seed"] == 11


def test_console_script_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "weyllab.cli", "--experiment", "nope"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "registry" in proc.stderr
