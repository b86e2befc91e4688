from importlib import resources

import pytest

from hoopt.config import RunConfig, canonical_text, load_config, parse_config
from hoopt.errors import ConfigurationError


def _default_ini() -> str:
    return (resources.files("hoopt") / "data" / "default.ini").read_text()


def test_defaults_file_matches_builtin():
    cfg = parse_config(_default_ini())
    assert cfg.sha256() == RunConfig().sha256()
    assert canonical_text(cfg) == canonical_text(RunConfig())


def test_empty_text_is_default():
    assert parse_config("").sha256() == RunConfig().sha256()


def test_hash_tracks_settings_not_output_dir():
    base = RunConfig()
    assert base.with_out("/tmp/elsewhere").sha256() == base.sha256()
    assert base.with_seed(3).sha256() != base.sha256()
    assert len(base.sha256()) == 64


def test_overrides():
    cfg = parse_config("""
[network]
sim_duration = 5000   ; short
master_seed = 9
[handover]
cio = 0-6:2.5, 3-7:-1
[sweep]
grid_subsample = 40
ttt_values = 64, 640
[model]
kinds = tree, gbt
gbt.n_rounds = 12
forest.bootstrap = false
[optimizer]
alpha = 0.8
beta = 0.1
load_threshold_2100 = 60
cooling_ratio = 0.99
budget = 300
""")
    assert cfg.net.sim_duration == 5000 and cfg.master_seed == 9
    assert cfg.handover.cio == {(0, 6): 2.5, (3, 7): -1.0}
    assert cfg.sweep.grid_subsample == 40
    assert cfg.sweep.grid.shape == (2, 11, 11, 2, 6)
    assert cfg.model.kinds == ("tree", "gbt")
    assert cfg.model.model_kind("gbt").params["n_rounds"] == 12
    assert cfg.model.model_kind("forest").params["bootstrap"] is False
    assert (cfg.optimizer.weights.alpha, cfg.optimizer.weights.beta) == (0.8, 0.1)
    assert cfg.optimizer.constraints.load_thresholds == (100.0, 60.0, 100.0)
    assert cfg.optimizer.schedule.ratio() == 0.99 and cfg.optimizer.schedule.budget == 300


@pytest.mark.parametrize("text,key", [
    ("[network]\nbogus = 1\n", "bogus"),
    ("[mystery]\nx = 1\n", None),
    ("[model]\ngbt.depth = 3\n", "gbt.depth"),
    ("[optimizer]\nalpha = 0.9\nbeta = 0.3\n", "alpha"),
    ("[sweep]\noff_range = 0, 12, 2\n", "a3_off"),
    ("[sweep]\nttt_values = 64, 100\n", None),
    ("[sweep]\nth1_range = -116, -96, 3\n", "th1_range"),
    ("[network]\nsim_duration = soon\n", "sim_duration"),
    ("[sweep]\nseed_policy = random\n", "seed_policy"),
    ("[model]\nkinds = linear, svm\n", "kinds"),
    ("[handover]\ncio = 0:2\n", None),
])
def test_rejections(text, key):
    with pytest.raises(ConfigurationError) as err:
        parse_config(text)
    if key is not None:
        assert err.value.key == key


def test_load_config(tmp_path):
    assert load_config(None).sha256() == RunConfig().sha256()
    p = tmp_path / "c.ini"
    p.write_text("[network]\nmaster_seed = 4\n")
    assert load_config(p).master_seed == 4
    with pytest.raises(ConfigurationError) as err:
        load_config(tmp_path / "absent.ini")
    assert err.value.key == "config"
