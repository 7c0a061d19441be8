"""
Shared helpers.

Small utilities used by several services: named sub-seeds and JSON output.
"""

import hashlib
import json
from pathlib import Path

import numpy as np


def sub_seed(seed: int, name: str) -> int:
    """
    Derive a named sub-seed from the run seed.

    Args:
        seed (int): Run seed.
        name (str): Consumer name (e.g. `"synth.centroids"`, `"train.shuffle"`).

    Returns:
        int: First 8 bytes of sha256("seed:name") as an unsigned integer.

    Example:
        >>> sub_seed(0, "train.init") == sub_seed(0, "train.init")
        True
    """

    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, name: str) -> np.random.Generator:
    """Return a PCG64 generator seeded with `sub_seed(seed, name)`."""

    return np.random.default_rng(sub_seed(seed, name))


def append_jsonl(path: str | Path, record: dict) -> None:
    """
    Append one JSON record as a line to `path`, creating parent folders.

    Args:
        path (str | Path): Target file.
        record (dict): JSON-serializable record.
    """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_json(path: str | Path, payload: dict) -> None:
    """Write a JSON document with sorted keys and a trailing newline."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
