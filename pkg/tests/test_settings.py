import pytest

from errors import ConfigError
from schemas import ModelConfig, RunConfig
from settings import build_run_config, load_run_config, read_config_file, valid_keys


def test_defaults_are_the_desk_configuration():
    run = load_run_config()
    assert (run.model.layers, run.model.d_model, run.model.heads, run.model.d_ff) == (2, 64, 4, 256)
    assert run.model.lam == 0.5 and run.model.dropout == 0.1
    assert (run.train.beta1, run.train.beta2, run.train.adam_eps) == (0.9, 0.998, 1e-9)
    assert run.train.warmup_steps == 400 and run.train.label_smoothing == 0.1
    assert run.decode.search == "greedy"


def test_file_values_are_routed_to_sections(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# desk run\nlayers = 3\nlambda=0.25\nmax-steps=10\nbeam_size=6  # even\ntask=sort\n\ntrain_path=data/train.tsv\n",
        encoding="utf-8",
    )
    run = load_run_config(path)
    assert run.model.layers == 3 and run.model.lam == 0.25
    assert run.train.max_steps == 10
    assert run.decode.beam_size == 6
    assert run.data.task == "sort"
    assert str(run.paths.train_path) == "data/train.tsv"


def test_flags_override_file_and_none_is_ignored(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("layers=3\nheads=2\n", encoding="utf-8")
    run = load_run_config(path, layers=1, heads=None)
    assert run.model.layers == 1 and run.model.heads == 2


def test_one_seed_drives_training():
    run = build_run_config({"seed": "11"})
    assert run.seed == 11 and run.train.seed == 11


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError, match="valid keys: .*lambda"):
        build_run_config({"lamda": "0.5"})
    assert "lambda" in valid_keys() and "seed" in valid_keys()


@pytest.mark.parametrize(
    "values",
    [
        {"lambda": "1.5"},
        {"d_model": "10", "heads": "4"},
        {"mode": "sideways"},
        {"max_length": "20", "max_positions": "16"},
        {"min_length": "5", "max_length": "3"},
    ],
)
def test_invalid_values_raise_config_error(values):
    with pytest.raises(ConfigError, match="Invalid configuration"):
        build_run_config(values)


def test_malformed_file_line(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("layers=2\njust words\n", encoding="utf-8")
    with pytest.raises(ConfigError, match=":2:"):
        read_config_file(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.cfg"):
        load_run_config(tmp_path / "nope.cfg")


def test_model_config_replace_revalidates():
    config = ModelConfig(d_model=8, heads=2)
    assert config.replace(vocab_size=20).vocab_size == 20
    with pytest.raises(ValueError):
        config.replace(heads=3)
    assert RunConfig().model == ModelConfig()
