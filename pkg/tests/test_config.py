import json

import pytest

from goldilocks.config import (
    OUT_ENV,
    ConfigError,
    load_config,
    load_patient_a,
    output_dir,
    parse_config,
    patient_a_document,
)
from goldilocks.model import PATIENT_A_X0, patient_a, patient_a_pkpd


def test_bundled_patient_a():
    cfg = load_patient_a()
    assert cfg.model == patient_a()
    assert cfg.pkpd == patient_a_pkpd()
    assert cfg.initial_state == PATIENT_A_X0
    assert cfg.horizon == 1000.0
    assert cfg.dose_schedule().impulses == ()


def test_round_trip_through_dict(tmp_path):
    doc = patient_a_document()
    doc["plan"] = {"t_i": 4, "t_f": 30, "dose": 20}
    cfg = parse_config(doc)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg
    assert len(cfg.dose_schedule().impulses) == 27


@pytest.mark.parametrize("mutate, key", [
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d["model"].update(gamma=1), "model.gamma"),
    (lambda d: d["pkpd"].update(EC50=1), "pkpd.EC50"),
    (lambda d: d["integrator"].update(method="rk4"), "integrator.method"),
])
def test_unknown_keys_are_named(mutate, key):
    doc = patient_a_document()
    mutate(doc)
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(doc)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("model"),
    lambda d: d["model"].update(beta=-1.0),
    lambda d: d["model"].pop("c"),
    lambda d: d["initial_state"].update(v=-0.1),
    lambda d: d.update(horizon="long"),
    lambda d: d.update(horizon=0.0),
    lambda d: d.update(seed=1.5),
    lambda d: d.update(plan={"t_i": 30, "t_f": 4, "dose": 1}),
    lambda d: d.update(plan={"t_i": 4, "t_f": 30, "dose": 5000}),
    lambda d: d.update(plan={"t_i": 4, "t_f": 30, "dose": 1}, schedule={"impulses": []}),
    lambda d: d.update(schedule={"impulses": [[2, 1], [1, 1]]}),
    lambda d: d.pop("pkpd") and d.update(plan={"t_i": 4, "t_f": 30, "dose": 1}),
    lambda d: d.update(model=[1, 2]),
])
def test_invalid_documents(mutate):
    doc = patient_a_document()
    mutate(doc)
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


def test_output_dir_precedence(monkeypatch):
    cfg = load_patient_a()
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert str(output_dir(cfg)) == "."
    monkeypatch.setenv(OUT_ENV, "/tmp/env-out")
    assert str(output_dir(cfg)) == "/tmp/env-out"
    assert str(output_dir(cfg, "/tmp/flag")) == "/tmp/flag"
