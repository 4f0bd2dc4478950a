from typing import Dict, Mapping

from data import read_tsv
from errors import InputError
from evalbench import evaluate_outputs
from helpers import PathLike, read_lines
from schemas import EvalReport


def evaluate_files(ref_path: PathLike, hyp_paths: Mapping[str, PathLike], bucket_width: int) -> Dict[str, EvalReport]:
    """Score each named hypothesis file against the targets of a source/target TSV."""
    pairs = read_tsv(ref_path)
    sources = [src for src, _ in pairs]
    references = [tgt for _, tgt in pairs]
    systems = {}
    for name, path in hyp_paths.items():
        lines = read_lines(path)
        if len(lines) != len(references):
            raise InputError(f"{path} has {len(lines)} lines but {ref_path} has {len(references)} examples")
        systems[name] = [line.split("\t", 1)[0].split() for line in lines]
    return evaluate_outputs(sources, systems, references, bucket_width)
