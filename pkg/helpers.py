import sys
import time
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

from errors import BenchmarkError, InputError

PathLike = Union[str, Path]
STDIO = "-"


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, *keys); same inputs, same stream."""
    return np.random.default_rng([int(seed), *[int(k) for k in keys]])


def read_lines(path: PathLike) -> List[str]:
    """Read UTF-8 lines without trailing newlines; ``-`` reads standard input."""
    if str(path) == STDIO:
        return [line.rstrip("\n") for line in sys.stdin]
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return [line.rstrip("\n") for line in handle]
    except OSError as e:
        raise InputError(f"Cannot read {path}: {e.strerror or e}")


def write_lines(path: PathLike, lines: Iterable[str]) -> None:
    """Write lines with ``\\n`` endings; ``-`` writes standard output."""
    if str(path) == STDIO:
        for line in lines:
            sys.stdout.write(line + "\n")
        sys.stdout.flush()
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            for line in lines:
                handle.write(line + "\n")
    except OSError as e:
        raise InputError(f"Cannot write {path}: {e.strerror or e}")


class Stopwatch:
    """Wall-clock timer on ``time.perf_counter``."""

    def __enter__(self):
        self.start = time.perf_counter()
        self.elapsed = 0.0
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None and not self.elapsed > 0.0:
            raise BenchmarkError(f"Timer reported a non-positive interval ({self.elapsed!r})")
        return False
