from typing import List

from data import TokenPair, read_tsv, write_tsv
from helpers import PathLike
from schemas import RunConfig
from training import distill


def distill_file(run: RunConfig, teacher: PathLike, train_path: PathLike, out_path: PathLike) -> List[TokenPair]:
    pairs = distill(teacher, read_tsv(train_path), run.decode)
    write_tsv(out_path, pairs)
    return pairs
