import json

import pytest

from compound_bsde.config import PRESETS, load_config, load_preset, parse_config
from compound_bsde.errors import NoCommonStep, ValidationError

BASE = {"name": "t", "experiment": "plain_compound", "model": {"r": 0.03, "sigma": 0.2, "x0": 14.0},
        "problem": {"K1": 1.0, "K2": 14.0, "T1": 0.2, "T2": 0.4}, "grid": {"steps": 10},
        "train": {"iters": 3, "batch": 16, "valid_size": 16},
        "cases": [{"outer": "call", "inner": "call"}, {"label": "pp", "outer": "put", "inner": "put", "sigma": 0.3}]}


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse_and_validate(name):
    cfg = parse_config(load_preset(name))
    specs = cfg.validate()
    assert len(specs) == len(cfg.cases) >= 1


def test_table_presets_shape():
    t1 = parse_config(load_preset("table1"))
    assert [c.label for c in t1.cases] == ["call-on-call", "call-on-put", "put-on-call", "put-on-put"]
    assert t1.cases[0].train.iters == 4000 and t1.cases[0].steps() == 50
    t2 = parse_config(load_preset("table2"))
    assert [c.build_spec().n_stages for c in t2.cases] == [2, 3, 4, 5]
    t3 = parse_config(load_preset("table3"))
    assert {c.build_model().dim for c in t3.cases} >= {1, 5, 10}
    t4 = parse_config(load_preset("table4"))
    assert [c.steps() for c in t4.cases] == [10, 20, 30, 40, 50, 60, 70, 80, 90, 100]


def test_override_routing():
    cfg = parse_config(BASE)
    a, b = cfg.cases
    assert a.label == "outer=call,inner=call" and b.label == "pp"
    assert b.model["sigma"] == 0.3 and a.model["sigma"] == 0.2
    assert b.problem["outer"] == "put"
    assert b.train.iters == 3


def test_convergence_sweep_cases():
    raw = dict(BASE, experiment="convergence_sweep", base="plain_compound", N_list=[10, 20],
               problem=dict(BASE["problem"], outer="call", inner="call"))
    raw.pop("cases")
    cfg = parse_config(raw)
    assert [c.steps() for c in cfg.cases] == [10, 20]
    assert all(c.experiment == "plain_compound" for c in cfg.cases)


@pytest.mark.parametrize("patch,exc", [
    ({"experiment": "asian"}, ValidationError),
    ({"model": {"volatility": 0.2}}, ValidationError),
    ({"train": {"epochs": 3}}, ValidationError),
    ({"seeds": []}, ValidationError),
    ({"cases": [{"strike": 3}]}, ValidationError),
])
def test_bad_configs(patch, exc):
    with pytest.raises(exc):
        parse_config(dict(BASE, **patch))


def test_validate_catches_bad_numbers():
    with pytest.raises(ValidationError):
        parse_config(dict(BASE, train={"iters": 0})).validate()
    with pytest.raises(ValidationError):
        parse_config(dict(BASE, train={"lr0": -1.0})).validate()
    with pytest.raises(NoCommonStep):
        parse_config(dict(BASE, problem=dict(BASE["problem"], T1=0.1234567))).validate()


def test_load_config_paths(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(BASE))
    assert load_config(p).name == "t"
    assert load_config("table1").name == "table1"
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ValidationError):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ValidationError):
        load_preset("table9")
