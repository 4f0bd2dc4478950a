import logging
from typing import List, Optional, Sequence

from data import Vocabulary, read_tsv
from helpers import PathLike
from schemas import RunConfig
from training import sweep_lambda

logger = logging.getLogger(__name__)


def sweep(
    run: RunConfig,
    train_path: PathLike,
    dev_path: PathLike,
    lambdas: Sequence[float],
    out_dir: PathLike,
    vocab_path: Optional[PathLike] = None,
) -> List[str]:
    """key=value lines: the dev metric per lambda and the best lambda."""
    vocab = Vocabulary.load(vocab_path) if vocab_path else None
    results = sweep_lambda(run.model, run.train, read_tsv(train_path), read_tsv(dev_path), lambdas, out_dir, vocab)
    lines = [f"lambda_{value:g}.{run.train.dev_metric}={r.best_metric:.4f}" for value, r in results.items()]
    best = max(results, key=lambda value: (results[value].best_metric, -value))
    lines.append(f"best_lambda={best:g}")
    logger.info("Best lambda %g (%s %.4f)", best, run.train.dev_metric, results[best].best_metric)
    return lines
