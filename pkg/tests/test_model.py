import numpy as np
import pytest

from data import L2R, R2L
from errors import ConfigError, ContractError, DimensionError, VocabError
from nn.attention import make_causal_mask, make_padding_mask
from nn.model import (
    Params,
    decode_bidirectional,
    decode_unidirectional,
    encode,
    incremental_step,
    init_params,
    init_state,
    param_shapes,
)
from nn.tensor import Tensor, no_grad, xavier_limit
from tests.conftest import tiny_config


def _source(rng, config, rows=2, length=5, lengths=None):
    ids = rng.integers(6, config.vocab_size, size=(rows, length))
    lengths = lengths or [length] * rows
    for r, n in enumerate(lengths):
        ids[r, n:] = 0
    mask = make_padding_mask(lengths, length)
    return ids, mask


def _streams(rng, config, rows, length):
    fwd = rng.integers(5, config.vocab_size, size=(rows, length))
    bwd = rng.integers(5, config.vocab_size, size=(rows, length))
    fwd[:, 0], bwd[:, 0] = L2R, R2L
    return fwd, bwd


def test_init_is_deterministic_in_seed(config):
    a, b, c = init_params(config, 7), init_params(config, 7), init_params(config, 8)
    for name in param_shapes(config):
        assert np.array_equal(a[name].data, b[name].data)
    assert not np.array_equal(a["embed"].data, c["embed"].data)


def test_init_shapes_and_ranges(config, params):
    assert list(params) == list(param_shapes(config))
    for name, t in params.items():
        assert t.shape == param_shapes(config)[name]
    limit = xavier_limit(config.vocab_size, config.d_model)
    assert np.abs(params["embed"].data).max() <= limit
    assert abs(params["embed"].data.mean()) < limit / 2
    assert np.array_equal(params["dec.0.ln3.gain"].data, np.ones(config.d_model))
    assert np.array_equal(params["enc.1.ffn.b1"].data, np.zeros(config.d_ff))


def test_decoder_parameters_are_shared_across_directions(config):
    names = param_shapes(config)
    assert not any("fwd" in n or "bwd" in n for n in names)
    assert sum(1 for n in names if n == "out") == 1


def test_params_validate_names_and_shapes(config, params):
    tensors = dict(params.items())
    tensors.pop("out")
    with pytest.raises(ContractError):
        Params(tensors, config)
    tensors["out"] = Tensor(np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        Params(tensors, config)


def test_init_rejects_non_config():
    with pytest.raises(ConfigError):
        init_params({"layers": 2}, seed=1)


def test_encode_shape(rng, config, params):
    ids, mask = _source(rng, config, rows=3, length=4)
    with no_grad():
        assert encode(ids, mask, params, config).shape == (3, 4, config.d_model)


def test_encode_rejects_out_of_range_ids(config, params):
    with pytest.raises(VocabError):
        encode(np.array([[6, config.vocab_size]]), make_padding_mask([2], 2), params, config)


def test_encode_is_row_permutation_equivariant(rng, config, params):
    ids, mask = _source(rng, config, rows=3, length=5, lengths=[5, 3, 4])
    perm = [2, 0, 1]
    with no_grad():
        out = encode(ids, mask, params, config).data
        permuted = encode(ids[perm], make_padding_mask([4, 5, 3], 5), params, config).data
    assert np.allclose(permuted, out[perm], atol=1e-12)


def test_encode_ignores_padding(rng, config, params):
    ids, _ = _source(rng, config, rows=1, length=4)
    padded = np.concatenate([ids, np.zeros((1, 3), dtype=ids.dtype)], axis=1)
    with no_grad():
        short = encode(ids, make_padding_mask([4], 4), params, config).data
        long = encode(padded, make_padding_mask([4], 7), params, config).data
    assert np.allclose(long[:, :4], short, atol=1e-12)


def test_zero_coupling_reduces_to_two_unidirectional_decoders(rng):
    config = tiny_config(lam=0.0)
    params = init_params(config, seed=5)
    for _ in range(20):
        ids, mask = _source(rng, config, rows=2, length=int(rng.integers(2, 6)))
        q = int(rng.integers(1, 7))
        fwd, bwd = _streams(rng, config, 2, q)
        causal = make_causal_mask(q)
        with no_grad():
            enc = encode(ids, mask, params, config)
            logits_f, logits_b = decode_bidirectional(fwd, bwd, enc, causal, mask, params, config)
            alone_f = decode_unidirectional(fwd, enc, causal, mask, params, config)
            alone_b = decode_unidirectional(bwd, enc, causal, mask, params, config)
        assert np.allclose(logits_f.data, alone_f.data, atol=1e-10)
        assert np.allclose(logits_b.data, alone_b.data, atol=1e-10)


@pytest.mark.parametrize("perturb", ["fwd", "bwd"])
def test_decoder_outputs_do_not_depend_on_later_positions(rng, config, params, perturb):
    ids, mask = _source(rng, config)
    fwd, bwd = _streams(rng, config, 2, 6)
    causal = make_causal_mask(6)
    j = 2
    changed_f, changed_b = fwd.copy(), bwd.copy()
    target = changed_f if perturb == "fwd" else changed_b
    target[:, j + 1 :] = (target[:, j + 1 :] - 5 + 1) % (config.vocab_size - 5) + 5
    with no_grad():
        enc = encode(ids, mask, params, config)
        base_f, base_b = decode_bidirectional(fwd, bwd, enc, causal, mask, params, config)
        new_f, new_b = decode_bidirectional(changed_f, changed_b, enc, causal, mask, params, config)
    assert np.allclose(base_f.data[:, : j + 1], new_f.data[:, : j + 1], rtol=0, atol=1e-12)
    assert np.allclose(base_b.data[:, : j + 1], new_b.data[:, : j + 1], rtol=0, atol=1e-12)
    assert not np.allclose(base_f.data[:, j + 1 :], new_f.data[:, j + 1 :])


def test_swapping_streams_swaps_logits(rng, config, params):
    ids, mask = _source(rng, config)
    fwd, bwd = _streams(rng, config, 2, 4)
    causal = make_causal_mask(4)
    with no_grad():
        enc = encode(ids, mask, params, config)
        logits_f, logits_b = decode_bidirectional(fwd, bwd, enc, causal, mask, params, config)
        swapped_f, swapped_b = decode_bidirectional(bwd, fwd, enc, causal, mask, params, config)
    assert np.allclose(swapped_f.data, logits_b.data, rtol=0, atol=1e-12)
    assert np.allclose(swapped_b.data, logits_f.data, rtol=0, atol=1e-12)


def test_decoder_rejects_unequal_streams(rng, config, params):
    ids, mask = _source(rng, config)
    with no_grad():
        enc = encode(ids, mask, params, config)
        with pytest.raises(ContractError):
            decode_bidirectional(np.full((2, 3), L2R), np.full((2, 2), R2L), enc, make_causal_mask(3), mask, params, config)


def _stepwise(state, fwd, bwd, params, config):
    out_f, out_b = [], []
    for t in range(fwd.shape[1]):
        logits_f, logits_b, state = incremental_step(
            state, fwd[:, t], None if bwd is None else bwd[:, t], params, config
        )
        out_f.append(logits_f)
        out_b.append(logits_b)
    return np.stack(out_f, axis=1), (None if bwd is None else np.stack(out_b, axis=1)), state


@pytest.mark.parametrize("steps", [1, 5])
def test_incremental_matches_teacher_forced_bidirectional(rng, config, params, steps):
    ids, mask = _source(rng, config, rows=3, length=5, lengths=[5, 2, 4])
    fwd, bwd = _streams(rng, config, 3, steps)
    with no_grad():
        enc = encode(ids, mask, params, config)
        full_f, full_b = decode_bidirectional(fwd, bwd, enc, make_causal_mask(steps), mask, params, config)
        step_f, step_b, state = _stepwise(init_state(enc, mask, params, config), fwd, bwd, params, config)
    assert state.length == steps
    assert np.allclose(step_f, full_f.data, atol=1e-10)
    assert np.allclose(step_b, full_b.data, atol=1e-10)


def test_incremental_matches_teacher_forced_on_random_prefixes(rng):
    for mode in ("bidirectional", "l2r"):
        config = tiny_config(mode=mode, layers=1)
        params = init_params(config, seed=11)
        for _ in range(25):
            q = int(rng.integers(1, 9))
            ids, mask = _source(rng, config, rows=1, length=int(rng.integers(1, 7)))
            fwd, bwd = _streams(rng, config, 1, q)
            causal = make_causal_mask(q)
            with no_grad():
                enc = encode(ids, mask, params, config)
                state = init_state(enc, mask, params, config)
                if config.bidirectional:
                    full_f, _ = decode_bidirectional(fwd, bwd, enc, causal, mask, params, config)
                    step_f, _, _ = _stepwise(state, fwd, bwd, params, config)
                else:
                    full_f = decode_unidirectional(fwd, enc, causal, mask, params, config)
                    step_f, _, _ = _stepwise(state, fwd, None, params, config)
            assert np.allclose(step_f, full_f.data, atol=1e-10)


def test_dead_positions_are_hidden_from_the_other_stream(rng, config, params):
    ids, mask = _source(rng, config, rows=1)
    fwd, bwd = _streams(rng, config, 1, 3)
    live_b = np.array([[True, True, False]])
    with no_grad():
        enc = encode(ids, mask, params, config)
        full_f, _ = decode_bidirectional(fwd, bwd, enc, make_causal_mask(3), mask, params, config, bwd_live=live_b)
        state = init_state(enc, mask, params, config)
        logits = []
        for t in range(3):
            logits_f, _, state = incremental_step(state, fwd[:, t], bwd[:, t], params, config, live_b=live_b[:, t])
            logits.append(logits_f)
    assert np.allclose(np.stack(logits, axis=1), full_f.data, atol=1e-10)


def test_state_is_not_mutated_by_stepping(rng, config, params):
    ids, mask = _source(rng, config)
    with no_grad():
        enc = encode(ids, mask, params, config)
        state = init_state(enc, mask, params, config)
        first_f, first_b, after = incremental_step(state, np.full(2, L2R), np.full(2, R2L), params, config)
        again_f, again_b, _ = incremental_step(state, np.full(2, L2R), np.full(2, R2L), params, config)
    assert state.length == 0 and after.length == 1
    assert state.keys[0].shape[3] == 0
    assert np.array_equal(first_f, again_f)
    assert np.array_equal(first_b, again_b)


def test_state_select_reorders_rows(rng, config, params):
    ids, mask = _source(rng, config, rows=2, length=4, lengths=[4, 2])
    with no_grad():
        enc = encode(ids, mask, params, config)
        state = init_state(enc, mask, params, config)
        _, _, state = incremental_step(state, np.full(2, L2R), np.full(2, R2L), params, config)
        base_f, _, _ = incremental_step(state, np.array([6, 7]), np.array([8, 9]), params, config)
        picked = state.select([1, 1, 0])
        sel_f, _, _ = incremental_step(picked, np.array([7, 7, 6]), np.array([9, 9, 8]), params, config)
    assert picked.rows == 3
    assert np.allclose(sel_f[0], base_f[1]) and np.allclose(sel_f[1], base_f[1]) and np.allclose(sel_f[2], base_f[0])


def test_incremental_step_rejects_mismatches(rng, config, params):
    ids, mask = _source(rng, config)
    with no_grad():
        enc = encode(ids, mask, params, config)
        state = init_state(enc, mask, params, config)
        with pytest.raises(ContractError):
            incremental_step(state, np.full(2, L2R), None, params, config)
        with pytest.raises(ContractError):
            incremental_step(state, np.full(3, L2R), np.full(3, R2L), params, config)
        with pytest.raises(ContractError):
            incremental_step(state, np.full(2, L2R), np.full(2, R2L), params, tiny_config(layers=1))
