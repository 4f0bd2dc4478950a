import logging
from typing import Optional

from data import Vocabulary, read_tsv
from helpers import PathLike
from schemas import RunConfig
from training import TrainResult, train

logger = logging.getLogger(__name__)


def run_training(
    run: RunConfig,
    train_path: PathLike,
    dev_path: PathLike,
    checkpoint: PathLike,
    vocab_path: Optional[PathLike] = None,
    log_path: Optional[PathLike] = None,
) -> TrainResult:
    train_set = read_tsv(train_path)
    dev_set = read_tsv(dev_path)
    vocab = Vocabulary.load(vocab_path) if vocab_path else None
    return train(run.model, run.train, train_set, dev_set, checkpoint, vocab=vocab, log_path=log_path)
