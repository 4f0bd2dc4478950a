import logging
from typing import Optional, Tuple

from data import Vocabulary
from errors import ContractError
from helpers import PathLike
from nn.checkpoint import load_checkpoint, vocab_path_for
from nn.model import Params

logger = logging.getLogger(__name__)


def load_model(checkpoint: PathLike, vocab_path: Optional[PathLike] = None) -> Tuple[Params, Vocabulary]:
    """Checkpoint plus its vocabulary (the sidecar unless ``vocab_path`` is given)."""
    params, meta = load_checkpoint(checkpoint)
    vocab = Vocabulary.load(vocab_path or vocab_path_for(checkpoint))
    if len(vocab) != params.config.vocab_size:
        raise ContractError(
            f"{checkpoint} expects {params.config.vocab_size} tokens but its vocabulary has {len(vocab)}"
        )
    logger.info("Loaded %s model from %s (step %s)", params.config.mode, checkpoint, meta.get("step", "?"))
    return params, vocab
