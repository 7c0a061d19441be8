"""
Embedding feature files.

This module reads and writes embedding stores on disk. A store is saved
as two files:

- a JSON manifest with the exact keys ``count``, ``dim``, ``ids``,
  ``identities``, ``cameras``, ``splits``, ``normalized`` and
  ``feature_file`` (path of the payload, relative to the manifest);
- a raw payload of little-endian 32-bit floats, row-major
  ``[count x dim]``.

Features are widened to 64-bit floats in memory.

Usage example:
    >>> from app.db.feature_files import write_store, read_store
    >>> write_store(store, "data/synth.json")
    >>> again = read_store("data/synth.json")
"""

import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from app.core.errors import DataValidationError
from app.models.embedding import SPLITS, EmbeddingStore

logger = logging.getLogger(__name__)

MANIFEST_KEYS = ("count", "dim", "ids", "identities", "cameras", "splits", "normalized", "feature_file")
PAYLOAD_DTYPE = np.dtype("<f4")

# ------------------------------------------------------------------------------
# Writing
# ------------------------------------------------------------------------------

def write_store(store: EmbeddingStore, manifest_path: str | Path, feature_file: Optional[str] = None) -> Path:
    """
    Write a store as manifest + float32 payload.

    Args:
        store (EmbeddingStore): Store to persist.
        manifest_path (str | Path): Target manifest path (JSON).
        feature_file (str, optional): Payload file name, relative to the
            manifest folder. Defaults to the manifest stem with `.f32`.

    Returns:
        Path: Path of the written payload.
    """

    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    feature_file = feature_file or f"{manifest_path.stem}.f32"
    payload_path = manifest_path.parent / feature_file

    payload_path.write_bytes(np.ascontiguousarray(store.features, dtype=PAYLOAD_DTYPE).tobytes())

    manifest = {
        "count": len(store),
        "dim": store.dim,
        "ids": store.ids.tolist(),
        "identities": store.identities.tolist(),
        "cameras": store.cameras.tolist(),
        "splits": list(store.splits),
        "normalized": bool(store.normalized),
        "feature_file": feature_file,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %d records (dim %d) to %s", len(store), store.dim, manifest_path)
    return payload_path

# ------------------------------------------------------------------------------
# Reading
# ------------------------------------------------------------------------------

def read_manifest(manifest_path: str | Path) -> dict:
    """
    Read and validate a manifest.

    Raises:
        DataValidationError: If the file is unreadable, not JSON, misses a
            key, or its columns disagree with `count`.
    """

    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataValidationError(f"Cannot read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"Manifest {manifest_path} is not valid JSON: {exc}") from exc

    if not isinstance(manifest, dict):
        raise DataValidationError(f"Manifest {manifest_path} must be a JSON object")
    missing = [key for key in MANIFEST_KEYS if key not in manifest]
    if missing:
        raise DataValidationError(f"Manifest {manifest_path} is missing keys: {', '.join(missing)}")

    count, dim = manifest["count"], manifest["dim"]
    if not isinstance(count, int) or count < 0:
        raise DataValidationError(f"Manifest count must be a non-negative integer, got {count!r}")
    if not isinstance(dim, int) or dim < 1:
        raise DataValidationError(f"Manifest dim must be a positive integer, got {dim!r}")
    for key in ("ids", "identities", "cameras", "splits"):
        if len(manifest[key]) != count:
            index = min(len(manifest[key]), count)
            raise DataValidationError(
                f"Manifest column '{key}' has {len(manifest[key])} entries but count is {count} "
                f"(first disagreement at record {index})"
            )
    for index, split in enumerate(manifest["splits"]):
        if split not in SPLITS:
            raise DataValidationError(f"Record {index}: unknown split '{split}'")

    seen: dict = {}
    for index, record_id in enumerate(manifest["ids"]):
        if record_id in seen:
            raise DataValidationError(
                f"Record {index}: duplicate id {record_id} (first seen at record {seen[record_id]})"
            )
        seen[record_id] = index
    return manifest


def read_store(manifest_path: str | Path) -> EmbeddingStore:
    """
    Load a store from a manifest and its payload, without normalizing.

    Raises:
        DataValidationError: On truncated payloads, payload sizes that do not
            match the manifest dimension, duplicate ids or malformed manifests.
            Messages name the offending record index.
    """

    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    count, dim = manifest["count"], manifest["dim"]
    payload_path = manifest_path.parent / manifest["feature_file"]

    try:
        payload = payload_path.read_bytes()
    except OSError as exc:
        raise DataValidationError(f"Cannot read feature file {payload_path}: {exc}") from exc

    row_bytes = dim * PAYLOAD_DTYPE.itemsize
    expected = count * row_bytes
    if len(payload) < expected:
        raise DataValidationError(
            f"Truncated feature file {payload_path}: {len(payload)} bytes for {count} x {dim} floats; "
            f"record {len(payload) // row_bytes} is incomplete"
        )
    if len(payload) > expected:
        raise DataValidationError(
            f"Dimension mismatch in {payload_path}: {len(payload)} bytes do not match {count} records of dim {dim}; "
            f"unexpected data after record {count - 1}"
        )

    features = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(count, dim).astype(np.float64)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(features), axis=1))
    if bad_rows.size:
        raise DataValidationError(f"Record {int(bad_rows[0])}: feature contains non-finite values")

    try:
        return EmbeddingStore.from_arrays(
            manifest["ids"],
            manifest["identities"],
            manifest["cameras"],
            manifest["splits"],
            features,
            normalized=bool(manifest["normalized"]),
        )
    except ValidationError as exc:
        raise DataValidationError(f"Invalid store {manifest_path}: {exc}") from exc
