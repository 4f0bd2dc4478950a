#!/usr/bin/env python3
"""Utility to inspect an SBSG1 checkpoint.

Run from the repository root:
  python view_checkpoint.py runs/sbsg.ckpt

It prints the model config and metadata from the header, then every tensor's
name, shape and value range, and the total parameter count.
"""
import argparse
import sys

import numpy as np
from rich.console import Console
from rich.table import Table

from errors import SbsgError
from nn.checkpoint import load_checkpoint, read_header, vocab_path_for


def print_header(path, console):
    fields, meta, _ = read_header(path)
    console.print("\n--- Header ---\n")
    for key, value in fields.items():
        console.print(f"{key}={value}")
    for key, value in meta.items():
        console.print(f"meta.{key}={value}")
    sidecar = vocab_path_for(path)
    console.print(f"vocabulary: {sidecar}" + ("" if sidecar.exists() else " (missing)"))


def print_tensors(path, console, limit=None):
    params, _ = load_checkpoint(path)
    table = Table(title="Tensors")
    for column in ("name", "shape", "min", "max", "mean |x|"):
        table.add_column(column)
    for i, (name, tensor) in enumerate(params.items()):
        if limit is not None and i >= limit:
            break
        data = tensor.data
        table.add_row(name, "x".join(map(str, data.shape)), f"{data.min():.4f}", f"{data.max():.4f}", f"{np.abs(data).mean():.4f}")
    console.print(table)
    console.print(f"parameters: {params.size}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("checkpoint", help="Path to an SBSG1 checkpoint")
    parser.add_argument("--limit", type=int, help="Show at most this many tensors")
    args = parser.parse_args()
    console = Console()
    try:
        print_header(args.checkpoint, console)
        print_tensors(args.checkpoint, console, args.limit)
    except SbsgError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(2)
