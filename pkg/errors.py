"""Exception types raised across the toolkit.

Every failure that should reach the command line as a clean message derives
from ``SbsgError``; ``cli.main`` maps those to exit code 2.
"""


class SbsgError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(SbsgError):
    """Tensor shapes do not fit the operation."""


class ContractError(SbsgError):
    """A precondition of an operation was violated by its caller."""


class ConfigError(SbsgError):
    """A configuration value is missing, unknown or out of range."""


class VocabError(SbsgError):
    """A token id lies outside the vocabulary."""


class InputError(SbsgError):
    """Input data (corpus, dataset file, token sequence) is malformed."""


class CheckpointError(SbsgError):
    """A checkpoint could not be written, read or matched to a config."""


class BenchmarkError(SbsgError):
    """Timing or step accounting failed during a benchmark run."""
