# tests/test_schemas.py
import pytest
from pydantic import ValidationError

from defaultlab.schemas.experiment import Backend, ExperimentConfig, ReportFormat


def doc(**parts):
    base = {"model": {"fixture": "geometric-zero-recovery"}}
    base.update(parts)
    return base


def test_defaults():
    config = ExperimentConfig.model_validate(doc())
    assert config.run.backend == Backend.exact
    assert config.run.checks is None
    assert config.output.format == ReportFormat.json_lines
    assert config.output.tables == ["Z", "A", "a", "price"]
    assert config.tolerances.eps_mart == 1e-10


def test_fraction_strings_accepted():
    config = ExperimentConfig.model_validate({
        "model": {
            "tree": {"kind": "trivial", "horizon": 2},
            "construction": {"kind": "cox", "target": [0, "1/2", "3/4"]},
            "claim": {"maturity": 2, "recovery": "1/4"},
        }
    })
    assert config.model.construction.target[1] == "1/2"


@pytest.mark.parametrize("bad", [
    {"model": {}},
    doc(run={"paths": 0}),
    doc(run={"seed": -3}),
    doc(run={"ladder": [7]}),
    doc(run={"checks": ["tower", "tower"]}),
    doc(run={"backend": "gpu"}),
    doc(output={"format": "xml"}),
    doc(unexpected=True),
    {"model": {"construction": {"target": [0, "one half"]}}},
    {"model": {"construction": {"target": [0], "mode": "continuous"}}},
    {"model": {"construction": {"kind": "cox", "target": [0, 1], "shocks": [{"time": 1, "jump": "1/4"}]}}},
    {"model": {"construction": {"target": [0, 1], "sampling": "next"}}},
])
def test_invalid_documents(bad):
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(bad)
