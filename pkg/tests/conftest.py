import numpy as np
import pytest

from data import Vocabulary, RESERVED_TOKENS
from nn.model import init_params
from nn.tensor import no_grad
from schemas import ModelConfig


def tiny_config(**changes) -> ModelConfig:
    base = dict(layers=2, d_model=8, heads=2, d_ff=16, vocab_size=11, dropout=0.0, max_positions=32)
    base.update(changes)
    return ModelConfig(**base)


@pytest.fixture
def config():
    return tiny_config()


@pytest.fixture
def params(config):
    return init_params(config, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def vocab():
    return Vocabulary(list(RESERVED_TOKENS) + [str(i) for i in range(5)])


def finite_difference(loss_fn, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. every entry of ``array`` (edited in place)."""
    grad = np.zeros_like(array)
    with no_grad():
        for idx in np.ndindex(array.shape):
            saved = array[idx]
            array[idx] = saved + h
            up = loss_fn()
            array[idx] = saved - h
            down = loss_fn()
            array[idx] = saved
            grad[idx] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


@pytest.fixture
def numeric_grad():
    return finite_difference


@pytest.fixture
def rel_err():
    return relative_error
