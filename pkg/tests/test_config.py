import pytest

from bornxy.config import PRESETS, ExperimentConfig, load_config, parse_config_text


def test_presets_fill_phase_point():
    cfg = ExperimentConfig(preset="oscillatory")
    assert (cfg.gamma, cfg.field) == PRESETS["oscillatory"] == (0.5, 0.5)
    assert ExperimentConfig(preset="ordered", field=0.7).field == 0.7


def test_custom_needs_both_parameters():
    with pytest.raises(ValueError, match="custom"):
        ExperimentConfig(preset="custom", gamma=1.0)


@pytest.mark.parametrize("kwargs,msg", [
    ({"preset": "glassy"}, "unknown preset"),
    ({"n_sites": 1}, "n_sites"),
    ({"n_sites": 25}, "n_sites"),
    ({"bond_dim": 0}, "bond_dim"),
    ({"samples": 0}, "samples"),
    ({"batch_size": 0}, "batch_size"),
    ({"learning_rate": 0}, "learning_rate"),
    ({"data_boundary": "mobius"}, "boundary"),
    ({"basis": "w"}, "basis"),
    ({"init_kind": "laplace"}, "init_kind"),
    ({"threads": 0}, "threads"),
])
def test_validation_names_the_precondition(kwargs, msg):
    with pytest.raises(ValueError, match=msg):
        ExperimentConfig(**kwargs)


def test_text_round_trip(tmp_path):
    cfg = ExperimentConfig(preset="disordered", n_sites=9, model_boundary="periodic", bond_dim=3,
                           eval_bases="x,y", learning_rate=0.004)
    assert cfg.eval_bases == ("z", "x", "y")
    path = tmp_path / "c.txt"
    path.write_text(cfg.to_text())
    assert load_config(path) == cfg


def test_aliases_comments_and_overrides(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nh = 0.3   # trailing\nsites = 8\nJ = 2\ngamma = 0.9\npreset = custom\n")
    cfg = load_config(path, bond_dim=4, n_sites=None)
    assert (cfg.field, cfg.n_sites, cfg.coupling, cfg.bond_dim) == (0.3, 8, 2.0, 4)


@pytest.mark.parametrize("text,msg", [("bogus = 1", "unknown key"), ("n_sites 4", "key = value"),
                                      ("n_sites = four", "bad value")])
def test_parse_errors(text, msg):
    with pytest.raises(ValueError, match=msg):
        parse_config_text(text)


def test_train_config_follows_fields():
    tc = ExperimentConfig(epochs=3, batch_size=50, seed_shuffle=9).train_config()
    assert (tc.epochs, tc.batch_size, tc.shuffle_seed) == (3, 50, 9)


def test_final_learning_rate_none_means_constant(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("final_learning_rate = none\n")
    cfg = load_config(path)
    assert cfg.final_learning_rate is None and cfg.train_config().final_learning_rate is None
    assert load_config(path, final_learning_rate=0.004).train_config().final_learning_rate == 0.004
