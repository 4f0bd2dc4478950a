"""Controllers package: the work behind each command-line subcommand.

Controllers take a validated RunConfig plus explicit paths and return plain
results; ``cli`` keeps its command functions thin and handles printing.
"""

from . import bench, distill, evaluate, make_data, models, sweep, train, translate

__all__ = ["bench", "distill", "evaluate", "make_data", "models", "sweep", "train", "translate"]
