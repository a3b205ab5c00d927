import inspect
import json

import pytest

from galactic.config import CONFIG_VERSION, DEFAULT_SAMPLE_FRAC, GlobalConfig, RunConfig
from galactic.errors import ConfigError
from galactic.globalcf import generate_candidates
from galactic.globalcf.mdl import DEFAULT_PSZ
from galactic.globalcf.selection import DEFAULT_CAP
from galactic.importance import ImportanceIndex
from galactic.local import LocalConfig
from galactic.surrogate import TrainConfig


def default_of(fn, name):
    return inspect.signature(fn).parameters[name].default


def test_defaults_match_modules():
    cfg = RunConfig()
    assert cfg.local == LocalConfig() and cfg.surrogate == TrainConfig()
    assert cfg.importance.q == LocalConfig().q
    assert cfg.importance.B == default_of(ImportanceIndex.__init__, "B")
    assert cfg.global_.p_sz == DEFAULT_PSZ == default_of(generate_candidates, "p_sz")
    assert cfg.global_.n_proto == default_of(generate_candidates, "n_proto")
    assert cfg.global_.n_crit == default_of(generate_candidates, "n_crit")
    assert cfg.global_.cap == DEFAULT_CAP
    assert cfg.sample_frac == DEFAULT_SAMPLE_FRAC == 0.30


def test_round_trip(tmp_path):
    cfg = RunConfig()
    cfg.dataset.path = "data/x.tsv"
    cfg.seed = 7
    cfg.local = LocalConfig(policy="random", strategy="source", lambda_prox=0.5)
    cfg.global_ = GlobalConfig(mu=3, mu_per_cluster={2: 4}, algorithm="hierarchical_optimal")
    p = tmp_path / "c.json"
    cfg.save(p)
    back = RunConfig.load(p)
    assert back == cfg
    assert back.to_json() == p.read_text()
    assert back.global_.mu_for(2) == 4 and back.global_.mu_for(0) == 3
    assert json.loads(p.read_text())["version"] == CONFIG_VERSION


def test_quantile_single_sourced():
    d = RunConfig().to_dict()
    assert "q" not in d["local"]
    d["importance"]["q"] = 0.5
    assert RunConfig.from_dict(d).local.q == 0.5
    d["local"]["q"] = 0.5
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


@pytest.mark.parametrize("patch", [
    {"typo": 1},
    {"local": {"stepsize": 0.1}},
    {"global": {"algorithm": "exhaustive"}},
    {"global": {"mu": 0}},
    {"local": {"policy": "all_random", "strategy": "combined"}},
    {"sample_frac": 2.0},
    {"surrogate": {"hidden_size": 0}},
    {"dataset": []},
])
def test_invalid_configs(patch):
    d = RunConfig().to_dict()
    for k, v in patch.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k] = {**d[k], **v}
        else:
            d[k] = v
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


def test_version_and_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"seed": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"version": "galactic-config-v0"})
    assert RunConfig.from_dict({"version": CONFIG_VERSION}) == RunConfig()
    with pytest.raises(ConfigError) as e:
        RunConfig.load(tmp_path / "missing.json")
    assert "path" in e.value.context
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(p)
