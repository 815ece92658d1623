# tests/test_cli.py
import json
from pathlib import Path

import pytest

from defaultlab import __version__
from defaultlab.fixtures.catalog import FIXTURES
from defaultlab.main import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_RUNTIME, load_config, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path: Path, name: str, text: str) -> str:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def fixture_toml(fixture: str, extra: str = "") -> str:
    return f'name = "t"\n\n[model]\nfixture = "{fixture}"\n{extra}'


def test_list_fixtures(capsys):
    assert main(["list-fixtures"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in FIXTURES:
        assert name in out


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_run_all_pass(tmp_path):
    config = write(tmp_path, "geo.toml", fixture_toml("geometric-zero-recovery"))
    assert main(["run", config, "--out", str(tmp_path / "out")]) == EXIT_OK
    assert (tmp_path / "out" / "report.jsonl").exists()


def test_run_with_failure(tmp_path):
    config = write(tmp_path, "jump.toml", fixture_toml("jump-recovery-shock"))
    assert main(["run", config, "--out", str(tmp_path / "out"), "--format", "csv"]) == EXIT_FAIL
    assert (tmp_path / "out" / "checks.csv").exists()


def test_check_prints_statuses(tmp_path, capsys):
    config = write(tmp_path, "fam.toml", fixture_toml("family-not-stopped"))
    assert main(["check", config, "--out", str(tmp_path / "out")]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "FAIL  immersion" in out


def test_json_config(tmp_path):
    doc = {"name": "j", "model": {"fixture": "geometric-zero-recovery"}, "run": {"checks": ["tower"]}}
    config = write(tmp_path, "geo.json", json.dumps(doc))
    assert main(["check", config, "--out", str(tmp_path / "out")]) == EXIT_OK


@pytest.mark.parametrize("name, text", [
    ("broken.toml", 'name = "x\n'),
    ("extra.toml", fixture_toml("geometric-zero-recovery", "colour = 1\n")),
    ("nomodel.toml", 'name = "x"\n'),
    ("bad.json", "{not json"),
])
def test_bad_documents_exit_2(tmp_path, capsys, name, text):
    config = write(tmp_path, name, text)
    assert main(["run", config, "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    assert "ошибка конфигурации" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "absent.toml")]) == EXIT_CONFIG


def test_negative_seed_exit_2(tmp_path):
    config = write(tmp_path, "geo.toml", fixture_toml("geometric-zero-recovery"))
    assert main(["run", config, "--seed", "-1", "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_mc_without_seed_exit_2(tmp_path):
    config = write(tmp_path, "jump.toml", fixture_toml("jump-recovery-shock"))
    assert main(["run", config, "--backend", "mc", "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_mc_with_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DEFAULTLAB_SEED", "4")
    config = write(tmp_path, "jump.toml", fixture_toml("jump-recovery-shock", '\n[run]\nchecks = ["tower"]\n'))
    out = tmp_path / "out"
    assert main(["run", config, "--backend", "mc", "--paths", "500", "--out", str(out)]) == EXIT_OK
    header = json.loads((out / "report.jsonl").read_text(encoding="utf-8").splitlines()[0])
    assert header["seed"] == 4 and header["backend"] == "mc"


def test_computation_error_exit_3(tmp_path):
    text = fixture_toml("predictable-default", '\n[run]\nchecks = []\n\n[output]\ntables = ["D"]\n')
    config = write(tmp_path, "pred.toml", text)
    assert main(["run", config, "--out", str(tmp_path / "out")]) == EXIT_RUNTIME


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_bundled_configs_parse(path):
    config = load_config(path)
    assert config.name
