import numpy as np
import pytest

from errors import CheckpointError
from nn.checkpoint import MAGIC, load_checkpoint, read_header, save_checkpoint, vocab_path_for
from nn.model import init_params
from tests.conftest import tiny_config


def test_save_then_load_restores_config_and_values(tmp_path):
    config = tiny_config(mode="r2l", lam=0.25, dropout=0.3)
    params = init_params(config, seed=9)
    path = save_checkpoint(tmp_path / "model.ckpt", params, {"step": 40, "dev_metric": "bleu"})

    loaded, meta = load_checkpoint(path)
    assert loaded.config == config
    assert meta == {"step": "40", "dev_metric": "bleu"}
    for name, tensor in params.items():
        assert np.array_equal(loaded[name].data, tensor.data)
        assert loaded[name].requires_grad


def test_header_is_readable_text(tmp_path):
    path = save_checkpoint(tmp_path / "model.ckpt", init_params(tiny_config(), seed=1))
    fields, meta, offset = read_header(path)
    assert fields["lambda"] == "0.5" and fields["mode"] == "bidirectional"
    assert meta == {}
    raw = path.read_bytes()
    assert raw.startswith(MAGIC.encode() + b"\n")
    assert raw[:offset].decode("utf-8").endswith("end\n")


def test_save_replaces_existing_file_atomically(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, init_params(tiny_config(), seed=1))
    save_checkpoint(path, init_params(tiny_config(), seed=2))
    assert not (tmp_path / "model.ckpt.tmp").exists()
    loaded, _ = load_checkpoint(path)
    assert np.array_equal(loaded["embed"].data, init_params(tiny_config(), seed=2)["embed"].data)


def test_float32_params_are_stored_as_float64(tmp_path):
    params = init_params(tiny_config(), seed=1).astype(np.float32)
    loaded, _ = load_checkpoint(save_checkpoint(tmp_path / "f32.ckpt", params))
    assert loaded.dtype == np.float64
    assert np.array_equal(loaded["out"].data, params["out"].data.astype(np.float64))


def test_vocab_sidecar_name(tmp_path):
    assert vocab_path_for(tmp_path / "runs" / "sbsg.ckpt") == tmp_path / "runs" / "sbsg.ckpt.vocab"


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(CheckpointError, match="absent.ckpt"):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_wrong_magic(tmp_path):
    path = tmp_path / "other.bin"
    path.write_bytes(b"PK\x03\x04 not a checkpoint\n")
    with pytest.raises(CheckpointError, match="not an SBSG1 checkpoint"):
        load_checkpoint(path)


def test_truncated_file(tmp_path):
    path = save_checkpoint(tmp_path / "model.ckpt", init_params(tiny_config(), seed=1))
    path.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes(tmp_path):
    path = save_checkpoint(tmp_path / "model.ckpt", init_params(tiny_config(), seed=1))
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_config_that_does_not_match_tensors(tmp_path):
    path = save_checkpoint(tmp_path / "model.ckpt", init_params(tiny_config(), seed=1))
    path.write_bytes(path.read_bytes().replace(b"d_ff=16\n", b"d_ff=12\n", 1))
    with pytest.raises(CheckpointError, match="does not match its config"):
        load_checkpoint(path)


def test_invalid_config_value(tmp_path):
    path = save_checkpoint(tmp_path / "model.ckpt", init_params(tiny_config(), seed=1))
    path.write_bytes(path.read_bytes().replace(b"mode=bidirectional\n", b"mode=sideways\n", 1))
    with pytest.raises(CheckpointError, match="invalid model config"):
        load_checkpoint(path)


def test_view_checkpoint_prints_header_and_tensors(tmp_path):
    from rich.console import Console

    from view_checkpoint import print_header, print_tensors

    params = init_params(tiny_config(), seed=1)
    path = save_checkpoint(tmp_path / "model.ckpt", params, {"step": 7})
    console = Console(record=True, width=200)
    print_header(path, console)
    print_tensors(path, console, limit=3)
    text = console.export_text()
    assert "mode=bidirectional" in text and "meta.step=7" in text
    assert "(missing)" in text
    assert "embed" in text
    assert f"parameters: {params.size}" in text
