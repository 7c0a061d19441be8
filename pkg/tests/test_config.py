import json

import pytest
from pydantic import ValidationError

from app.core.errors import ConfigError
from app.schemas.config import RunConfig, SamplerConfig, SynthConfig, TrainConfig


def test_defaults_match_training_recipe():
    cfg = RunConfig()
    assert (cfg.sampler.k1, cfg.sampler.k2, cfg.sampler.k, cfg.sampler.mode) == (70, 20, 100, "hgs")
    assert cfg.graph.k_prime == 8
    assert (cfg.train.lr, cfg.train.momentum, cfg.train.weight_decay) == (0.01, 0.9, 1e-4)
    assert (cfg.train.epochs, cfg.train.batch, cfg.train.layers) == (500, 4, 9)
    assert (cfg.train.focal_alpha, cfg.train.focal_gamma) == (2.0, 0.25)
    assert cfg.eval.lam == 1.0


def test_sampler_budget_validation():
    with pytest.raises(ValidationError):
        SamplerConfig(k1=5, k=3)


def test_sampler_clamped():
    cfg = SamplerConfig(k1=70, k2=20, k=100).clamped(3)
    assert (cfg.k1, cfg.k2, cfg.k) == (3, 20, 3)


def test_overrides_apply_dotted_keys_and_skip_none():
    cfg = RunConfig().with_overrides({"train.lr": 0.1, "sampler.k": None, "store": "s.json"})
    assert cfg.train.lr == 0.1
    assert cfg.sampler.k == 100
    assert cfg.store == "s.json"


@pytest.mark.parametrize("overrides", [{"train.nope": 1}, {"nope.lr": 1}, {"train.lr": -1.0}])
def test_overrides_reject_bad_input(overrides):
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(overrides)


def test_with_seed_propagates():
    cfg = RunConfig().with_seed(11)
    assert (cfg.seed, cfg.synth.seed, cfg.train.seed) == (11, 11, 11)
    assert RunConfig().with_seed(None) == RunConfig()


def test_config_hash_tracks_content():
    assert RunConfig().config_hash() == RunConfig().config_hash()
    assert RunConfig().config_hash() != RunConfig().with_overrides({"eval.lam": 0.5}).config_hash()


def test_config_hash_ignores_paths_and_workers():
    base = RunConfig().with_overrides({"store": "a/s.json", "out_dir": "runs/a"})
    moved = RunConfig().with_overrides({"store": "b/s.json", "out_dir": "runs/b", "eval.workers": 8})
    assert base.config_hash() == moved.config_hash() == RunConfig().config_hash()
    assert '"store":"a/s.json"' in base.canonical_json()


def test_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"train": {"epochs": 3}, "seed": 4}))
    cfg = RunConfig.from_file(path)
    assert cfg.train.epochs == 3 and cfg.seed == 4


@pytest.mark.parametrize("text", ["{not json", json.dumps({"train": {"unknown": 1}})])
def test_from_file_errors(tmp_path, text):
    path = tmp_path / "run.json"
    path.write_text(text)
    with pytest.raises(ConfigError):
        RunConfig.from_file(path)


def test_from_file_missing(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "absent.json")


def test_train_config_rejects_non_positive_lr():
    with pytest.raises(ValidationError):
        TrainConfig(lr=0.0)


def test_synth_config_needs_a_gallery_sample_per_camera():
    assert SynthConfig(per_camera=2).per_camera == 2
    with pytest.raises(ValidationError):
        SynthConfig(per_camera=1)
    with pytest.raises(ConfigError):
        RunConfig().with_overrides({"synth.per_camera": 1})
