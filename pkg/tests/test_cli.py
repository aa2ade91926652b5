import json

import pytest

from cocycle_lab.cli import main
from cocycle_lab.config import DEFAULTS, load_config
from cocycle_lab.errors import ConfigError


@pytest.mark.parametrize("data, field", [
    ({"params": {"B": "missing"}}, "params.B"),
    ({"tolerances": {"angle": -1.0}}, "tolerances.angle"),
    ({"samples": {"points": 2.5}}, "samples.points"),
    ({"seed": -3}, "seed"),
    ({"seed": 2**64}, "seed"),
    ({"base": {"matrix": [[1, 1], [0, 1]]}}, "base.matrix"),
    ({"generators": {"B": {"kind": "weird"}}}, "generators.B.kind"),
    ({"generators": {"B": {"kind": "random", "dimension": 2}}}, "generators.B.scale"),
    ({"colour": "blue"}, "colour"),
])
def test_config_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as exc:
        load_config("perturbation", data)
    assert exc.value.field == field


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        load_config("nope")


def test_defaults_validate():
    for name in DEFAULTS:
        cfg = load_config(name)
        assert cfg.scenario == name


def test_overrides_merge():
    cfg = load_config("perturbation", {"samples": {"points": 3}}, seed=9)
    assert cfg.samples["points"] == 3 and cfg.n_max["power"] == 40 and cfg.seed == 9
    assert cfg.hash() != load_config("perturbation").hash()
    assert cfg.hash() == load_config("perturbation", {"samples": {"points": 3}}, seed=9).hash()


def test_generator_override_keeps_other_names():
    cfg = load_config("perturbation", {"generators": {"extra": {"kind": "constant",
                                                                 "matrix": [[1, 0], [0, 1]]}}})
    assert set(cfg.generators) == {"B", "extra"}


def test_cli_writes_tables_and_manifest(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["perturbation", "--out", str(out), "--serial"]) == 0
    assert (out / "perturbation_splitting.csv").exists()
    manifest = (out / "manifest.csv").read_text().splitlines()
    assert manifest[0] == "scenario,seed,config_hash,verdict"
    assert manifest[1].startswith("perturbation,0,") and manifest[1].endswith(",pass")


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"params": {"B": "ghost"}}))
    assert main(["perturbation", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "params.B" in capsys.readouterr().err


def test_cli_invalid_json(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["perturbation", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_cli_failed_check_exit_code(tmp_path, capsys):
    # a reference far from the perturbed cocycle fails the distance check
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"reference": [[2.0, 0.5], [0.0, 0.5]]}}))
    assert main(["perturbation", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "splitting_distance" in capsys.readouterr().err
    assert (tmp_path / "manifest.csv").read_text().strip().endswith(",fail")


def test_cli_library_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    near = [[1.05, 0.0], [0.0, 1 / 1.05]]
    cfg.write_text(json.dumps({"generators": {"B": {"kind": "constant", "matrix": near}},
                               "params": {"reference": near}, "n_max": {"power": 4}}))
    assert main(["perturbation", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    assert "GapTooSmall" in capsys.readouterr().err


def test_print_config(capsys):
    assert main(["pw-demo", "--print-config", "--seed", "4"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["seed"] == 4 and data["params"]["alpha"] == -0.2


def test_manifest_keeps_one_row_per_scenario(tmp_path, capsys):
    for _ in range(2):
        assert main(["perturbation", "--out", str(tmp_path)]) == 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"samples": {"points": 100}, "n_max": {"short": 50, "long": 100}}))
    main(["pw-demo", "--config", str(cfg), "--out", str(tmp_path)])
    rows = (tmp_path / "manifest.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["perturbation", "pw-demo"]
