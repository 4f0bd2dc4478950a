"""``SBSG1`` checkpoint files.

Layout: a UTF-8 text header (magic line, ``key=value`` model config fields,
``meta.*`` entries, ``tensors=N``, ``end``), then N binary records of
``name_len:u32 name ndim:u32 dims:u64*ndim data:<f8*``, all little-endian.
"""
import logging
import os
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from errors import CheckpointError
from helpers import PathLike
from nn.model import Params
from nn.tensor import Tensor
from schemas import ModelConfig

logger = logging.getLogger(__name__)

MAGIC = "SBSG1"
END = "end"


def vocab_path_for(checkpoint_path: PathLike) -> Path:
    """Vocabulary sidecar written next to every checkpoint."""
    path = Path(checkpoint_path)
    return path.with_name(path.name + ".vocab")


def save_checkpoint(path: PathLike, params: Params, meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    header = [MAGIC]
    for key, value in params.config.model_dump(by_alias=True).items():
        header.append(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    for key, value in sorted((meta or {}).items()):
        header.append(f"meta.{key}={value}")
    header.append(f"tensors={len(params)}")
    header.append(END)

    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as handle:
            handle.write(("\n".join(header) + "\n").encode("utf-8"))
            for name, tensor in params.items():
                data = np.ascontiguousarray(tensor.data, dtype="<f8")
                encoded = name.encode("utf-8")
                handle.write(struct.pack("<I", len(encoded)))
                handle.write(encoded)
                handle.write(struct.pack("<I", data.ndim))
                handle.write(struct.pack(f"<{data.ndim}Q", *data.shape))
                handle.write(data.tobytes(order="C"))
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e.strerror or e}")
    logger.debug("Saved %d tensors to %s", len(params), path)
    return path


def _read_exact(handle, size: int, path: Path) -> bytes:
    chunk = handle.read(size)
    if len(chunk) != size:
        raise CheckpointError(f"Checkpoint {path} is truncated")
    return chunk


def read_header(path: PathLike) -> Tuple[Dict[str, str], Dict[str, str], int]:
    """(config fields, meta fields, byte offset of the first tensor record)."""
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            magic = handle.readline().decode("utf-8", errors="replace").rstrip("\n")
            if magic != MAGIC:
                raise CheckpointError(f"{path} is not an {MAGIC} checkpoint (found {magic[:16]!r})")
            fields, meta = {}, {}
            while True:
                raw = handle.readline()
                if not raw:
                    raise CheckpointError(f"Checkpoint {path} has no header terminator")
                line = raw.decode("utf-8").rstrip("\n")
                if line == END:
                    return fields, meta, handle.tell()
                key, sep, value = line.partition("=")
                if not sep:
                    raise CheckpointError(f"Malformed header line in {path}: {line!r}")
                if key.startswith("meta."):
                    meta[key[len("meta.") :]] = value
                else:
                    fields[key] = value
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e.strerror or e}")


def load_checkpoint(path: PathLike) -> Tuple[Params, Dict[str, str]]:
    path = Path(path)
    fields, meta, offset = read_header(path)
    count = int(fields.pop("tensors", "-1"))
    try:
        config = ModelConfig.model_validate(fields)
    except ValidationError as e:
        raise CheckpointError(f"Checkpoint {path} carries an invalid model config: {e.errors()[0]['msg']}")

    tensors = {}
    try:
        with open(path, "rb") as handle:
            handle.seek(offset)
            for _ in range(count):
                (name_len,) = struct.unpack("<I", _read_exact(handle, 4, path))
                name = _read_exact(handle, name_len, path).decode("utf-8")
                (ndim,) = struct.unpack("<I", _read_exact(handle, 4, path))
                shape = struct.unpack(f"<{ndim}Q", _read_exact(handle, 8 * ndim, path))
                size = int(np.prod(shape, dtype=np.int64))
                data = np.frombuffer(_read_exact(handle, 8 * size, path), dtype="<f8").reshape(shape)
                tensors[name] = Tensor(data.astype(np.float64), requires_grad=True)
            if handle.read(1):
                raise CheckpointError(f"Checkpoint {path} has trailing bytes after {count} tensors")
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e.strerror or e}")

    try:
        params = Params(tensors, config)
    except Exception as e:
        raise CheckpointError(f"Checkpoint {path} does not match its config: {str(e)}")
    return params, meta
