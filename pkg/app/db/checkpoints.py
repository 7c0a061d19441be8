"""
Training checkpoints.

A checkpoint at epoch ``e`` is the pair ``ckpt_{e}.bin`` + ``ckpt_{e}.json``
inside the run directory.

Binary layout (little-endian):
    - header: magic ``b"GRRK"``, then version, d, d_e, L and hidden as uint32;
    - every parameter block in declaration order as float64;
    - the momentum buffer of every trainable block, same order, as float64.

The JSON sidecar holds the run config and its hash, the epoch, the loss
history and the state of the batch shuffler.
"""

import json
import logging
import re
import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from app.core.errors import DataValidationError
from app.models.params import ModelParams, TrainState, block_shapes, is_trainable
from app.util.helpers import write_json

logger = logging.getLogger(__name__)

MAGIC = b"GRRK"
VERSION = 1
HEADER = struct.Struct("<4sIIIII")
VALUE_DTYPE = np.dtype("<f8")
CHECKPOINT_PATTERN = re.compile(r"^ckpt_(\d+)\.bin$")


def checkpoint_paths(directory: str | Path, epoch: int) -> Tuple[Path, Path]:
    """Binary and sidecar paths of the checkpoint written at `epoch`."""

    directory = Path(directory)
    return directory / f"ckpt_{epoch}.bin", directory / f"ckpt_{epoch}.json"


def save_checkpoint(directory: str | Path, state: TrainState, config: Optional[dict] = None,
                    config_hash: Optional[str] = None) -> Tuple[Path, Path]:
    """
    Write the checkpoint of `state` into `directory`.

    Args:
        directory (str | Path): Run directory.
        state (TrainState): State to persist.
        config (dict, optional): Run configuration dump.
        config_hash (str, optional): Hash of the run configuration.

    Returns:
        tuple[Path, Path]: Binary and sidecar paths.
    """

    params = state.params
    bin_path, json_path = checkpoint_paths(directory, state.epoch)
    bin_path.parent.mkdir(parents=True, exist_ok=True)

    chunks = [HEADER.pack(MAGIC, VERSION, params.dim, params.d_e, params.layers, params.hidden)]
    names = params.block_names()
    for name in names:
        chunks.append(np.ascontiguousarray(params[name], dtype=VALUE_DTYPE).tobytes())
    for name in params.trainable_names():
        buffer = state.momentum.get(name)
        if buffer is None:
            buffer = np.zeros_like(params[name])
        chunks.append(np.ascontiguousarray(buffer, dtype=VALUE_DTYPE).tobytes())
    bin_path.write_bytes(b"".join(chunks))

    write_json(json_path, {
        "version": VERSION,
        "epoch": state.epoch,
        "loss_history": list(state.loss_history),
        "rng_state": state.rng_state,
        "blocks": names,
        "config": config,
        "config_hash": config_hash,
    })
    logger.debug("Saved checkpoint %s", bin_path)
    return bin_path, json_path


def load_checkpoint(bin_path: str | Path) -> Tuple[TrainState, dict]:
    """
    Read a checkpoint.

    Args:
        bin_path (str | Path): Path of `ckpt_{epoch}.bin`; the sidecar is
            read from the same folder.

    Returns:
        tuple[TrainState, dict]: Restored state and sidecar metadata.

    Raises:
        DataValidationError: If the file is unreadable, the magic or version
            is wrong, the payload size disagrees with the header, or the
            sidecar is missing or malformed.
    """

    bin_path = Path(bin_path)
    try:
        data = bin_path.read_bytes()
    except OSError as exc:
        raise DataValidationError(f"Cannot read checkpoint {bin_path}: {exc}") from exc

    if len(data) < HEADER.size:
        raise DataValidationError(f"Checkpoint {bin_path} is too short for its header")
    magic, version, dim, d_e, layers, hidden = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataValidationError(f"Checkpoint {bin_path} has bad magic {magic!r}")
    if version != VERSION:
        raise DataValidationError(f"Checkpoint {bin_path} has unsupported version {version}")

    shapes = block_shapes(dim, d_e, layers, hidden)
    trainable = [name for name in shapes if is_trainable(name)]
    sizes = {name: int(np.prod(shape)) for name, shape in shapes.items()}
    expected = sum(sizes.values()) + sum(sizes[name] for name in trainable)
    values = np.frombuffer(data, dtype=VALUE_DTYPE, offset=HEADER.size) if len(data) > HEADER.size else np.zeros(0)
    if (len(data) - HEADER.size) % VALUE_DTYPE.itemsize or values.size != expected:
        raise DataValidationError(
            f"Checkpoint {bin_path} holds {len(data) - HEADER.size} payload bytes, expected {expected * 8}"
        )

    offset = 0
    tensors = {}
    for name, shape in shapes.items():
        tensors[name] = values[offset:offset + sizes[name]].reshape(shape).astype(np.float64)
        offset += sizes[name]
    momentum = {}
    for name in trainable:
        momentum[name] = values[offset:offset + sizes[name]].reshape(shapes[name]).astype(np.float64)
        offset += sizes[name]

    json_path = bin_path.with_suffix(".json")
    try:
        meta = json.loads(json_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataValidationError(f"Cannot read checkpoint sidecar {json_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"Checkpoint sidecar {json_path} is not valid JSON: {exc}") from exc
    if not isinstance(meta, dict) or "epoch" not in meta:
        raise DataValidationError(f"Checkpoint sidecar {json_path} has no epoch")

    params = ModelParams(dim=dim, d_e=d_e, layers=layers, hidden=hidden, tensors=tensors)
    if not params.all_finite():
        raise DataValidationError(f"Checkpoint {bin_path} contains non-finite parameters")

    state = TrainState(
        params=params,
        momentum=momentum,
        epoch=int(meta["epoch"]),
        loss_history=[float(v) for v in meta.get("loss_history", [])],
        rng_state=meta.get("rng_state"),
    )
    return state, meta


def latest_checkpoint(directory: str | Path) -> Optional[Path]:
    """Path of the checkpoint with the highest epoch in `directory`, or None."""

    directory = Path(directory)
    if not directory.is_dir():
        return None
    best: Optional[Tuple[int, Path]] = None
    for path in directory.iterdir():
        match = CHECKPOINT_PATTERN.match(path.name)
        if match and (best is None or int(match.group(1)) > best[0]):
            best = (int(match.group(1)), path)
    return best[1] if best else None
