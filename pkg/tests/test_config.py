import math

import pytest

from curriculum_lab import config as cfgmod
from curriculum_lab.config import ConfigError, ExperimentConfig


def test_defaults_validate():
    cfg = cfgmod.from_dict({})
    assert cfg == ExperimentConfig()
    assert cfg.problem.eta == 0.01 and cfg.race.seeds == 100


def test_load_and_override(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('seed = 4\n[problem]\nkind = "hinge"\n[grid]\npsi = [0.5, 1]\n[distribution]\ndim = 3\n')
    cfg = cfgmod.load(path)
    assert cfg.seed == 4 and cfg.problem.kind == "hinge" and cfg.grid.psi == (0.5, 1)
    over = cfgmod.with_overrides(cfg, seed=9, jobs=None, out="x")
    assert over.seed == 9 and over.jobs == 1 and over.out == "x"


def test_hash_ignores_output_location():
    a = ExperimentConfig()
    assert a.config_hash() == cfgmod.with_overrides(a, out="elsewhere", jobs=4).config_hash()
    assert a.config_hash() != cfgmod.with_overrides(a, seed=1).config_hash()
    assert len(a.config_hash()) == 64


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"problem": {"eta": -1.0}},
        {"problem": {"eta": "fast"}},
        {"problem": {"kind": "svm"}},
        {"problem": {"learning_rate": 0.1}},
        {"seed": -1},
        {"seed": 1.5},
        {"format": "xml"},
        {"grid": {"psi": []}},
        {"grid": {"psi": [-1.0]}},
        {"grid": {"psi": 1.0}},
        {"geometry": {"lam": [0.0]}},
        {"geometry": {"theta": [math.pi]}},
        {"geometry": {"w_bar": [1.0, 0.0]}},
        {"distribution": {"kind": "box"}, "geometry": {"zenith": [1.0, 1.0, 0.0]}},
        {"problem": {"kind": "hinge"}, "distribution": {"dim": 1}},
        {"problem": {"kind": "hinge"}, "grid": {"upsilon": [0.0]}},
        {"mc": {"n": 1}},
        {"race": {"policies": ["greedy"]}},
        {"race": {"policies": ["uniform", "uniform"]}},
        {"race": {"checkpoint": 5000}},
        {"race": {"score_law": "cauchy"}},
        {"race": {"alpha": 1.5}},
        {"counterexample": {"mode": "hinge_low_psi", "psi2": 0.6}},
        {"counterexample": {"mode": "hinge_low_psi", "theta": 2.0}},
        {"counterexample": {"mode": "other"}},
        {"problem": []},
    ],
)
def test_invalid(data):
    with pytest.raises(ConfigError):
        cfgmod.from_dict(data)


def test_malformed_file(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("this is = not [toml")
    with pytest.raises(ConfigError):
        cfgmod.load(path)
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "missing.toml")


def test_derived_objects():
    cfg = cfgmod.from_dict({"distribution": {"kind": "ball", "dim": 3, "radius": 2.0}, "geometry": {"zenith": [0, 2, 0, 0]}})
    assert cfg.make_distribution().radius == 2.0
    assert list(cfg.w_bar()) == [1.0, 0.0, 0.0, 0.0]
    assert list(cfg.zenith()) == [0.0, 1.0, 0.0, 0.0]
    assert cfg.score_law().kind == "half_normal"
