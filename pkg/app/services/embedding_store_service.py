"""
Embedding store service.

This module implements the operations on labeled embedding datasets:
loading and writing stores, L2 normalization, the synthetic embedding
generator used for desk-scale experiments, and the probe coverage check.
"""

import logging
from pathlib import Path

import numpy as np

from app.core.errors import ConfigError, DataValidationError
from app.db.feature_files import read_store, write_store
from app.models.embedding import EmbeddingStore, SplitCoverage
from app.schemas.config import SynthConfig
from app.util.helpers import rng_for

logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-6
"""Rows whose L2 norm is within this distance of 1 count as normalized and are left untouched."""


def load(manifest_path: str | Path) -> EmbeddingStore:
    """
    Load and validate an embedding store.

    Features are L2-normalized when the manifest `normalized` flag is set.
    Probes without any gallery match are logged as distractor-only.

    Args:
        manifest_path (str | Path): Path of the JSON manifest.

    Returns:
        EmbeddingStore: The validated store.

    Raises:
        DataValidationError: On any manifest / payload inconsistency.
    """

    store = read_store(manifest_path)
    if store.normalized:
        store = normalize(store)
    report = coverage(store)
    if report.uncovered:
        logger.warning(
            "%d of %d probes have no cross-camera gallery match (distractor-only): %s",
            len(report.uncovered), report.probes, report.uncovered[:10],
        )
    return store


def write(store: EmbeddingStore, manifest_path: str | Path) -> Path:
    """Persist a store; returns the payload path."""

    return write_store(store, manifest_path)


def normalize(store: EmbeddingStore) -> EmbeddingStore:
    """
    Scale every feature to unit L2 norm.

    Rows already within `UNIT_TOLERANCE` of unit norm are kept bit-for-bit,
    which makes the operation idempotent.

    Raises:
        DataValidationError: If a feature has zero norm (names the record id).

    Example:
        >>> store = EmbeddingStore.from_arrays([0], [0], [0], ["gallery"], [[3.0, 4.0]])
        >>> normalize(store).features.tolist()
        [[0.6, 0.8]]
    """

    norms = np.linalg.norm(store.features, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataValidationError(f"Record id {int(store.ids[zero[0]])} has a zero-norm feature")

    features = store.features.copy()
    rescale = np.abs(norms - 1.0) > UNIT_TOLERANCE
    features[rescale] = features[rescale] / norms[rescale, None]
    return store.with_features(features, normalized=True)


def synth_generate(cfg: SynthConfig) -> EmbeddingStore:
    """
    Generate a labeled synthetic store.

    Every identity gets a random unit centroid. Every camera owns a fixed
    direction; the directions lie evenly spaced on an arc of `camera_arc`
    degrees inside a random plane, so camera c resembles cameras c - 1 and
    c + 1 more than distant ones. For each identity a direction is
    orthogonalized against the centroid, normalized and scaled by
    `camera_offset`. A sample
    is `normalize(centroid + camera offset + sigma * gaussian)`, rounded to
    float32 precision so that writing and re-loading it is lossless.

    The first `round(train_fraction * identities)` identities form the
    training split. For every other identity and camera the first sample is
    a probe and the remaining samples are gallery.

    Args:
        cfg (SynthConfig): Generator configuration.

    Returns:
        EmbeddingStore: A normalized store; a pure function of `cfg`.

    Raises:
        ConfigError: If `dim < 2`.
    """

    if cfg.dim < 2:
        raise ConfigError(f"dim {cfg.dim} is too small to host {cfg.identities} distinct centroids (need dim >= 2)")

    centroids = rng_for(cfg.seed, "synth.centroids").standard_normal((cfg.identities, cfg.dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    plane, _ = np.linalg.qr(rng_for(cfg.seed, "synth.cameras").standard_normal((cfg.dim, 2)))
    angles = np.deg2rad(cfg.camera_arc) * np.arange(cfg.cameras) / max(cfg.cameras - 1, 1)
    directions = np.cos(angles)[:, None] * plane[:, 0] + np.sin(angles)[:, None] * plane[:, 1]
    noise = rng_for(cfg.seed, "synth.noise").standard_normal((cfg.identities, cfg.cameras, cfg.per_camera, cfg.dim))

    n_train = int(round(cfg.train_fraction * cfg.identities))
    ids, identities, cameras, splits, rows = [], [], [], [], []
    for identity in range(cfg.identities):
        centroid = centroids[identity]
        for camera in range(cfg.cameras):
            offset = directions[camera] - (directions[camera] @ centroid) * centroid
            length = np.linalg.norm(offset)
            offset = offset / length * cfg.camera_offset if length > 0 else np.zeros(cfg.dim)
            for sample in range(cfg.per_camera):
                vector = centroid + offset + cfg.sigma * noise[identity, camera, sample]
                rows.append(vector / np.linalg.norm(vector))
                ids.append(len(ids))
                identities.append(identity)
                cameras.append(camera)
                if identity < n_train:
                    splits.append("train")
                else:
                    splits.append("probe" if sample == 0 else "gallery")

    features = np.asarray(rows, dtype=np.float32).astype(np.float64)
    logger.info(
        "Generated %d synthetic records (%d identities, %d cameras, dim %d)",
        len(ids), cfg.identities, cfg.cameras, cfg.dim,
    )
    return EmbeddingStore.from_arrays(ids, identities, cameras, splits, features, normalized=True)


def coverage(store: EmbeddingStore, cross_camera: bool = True) -> SplitCoverage:
    """
    Find probes that have no gallery record of their identity.

    Args:
        store (EmbeddingStore): Store to check.
        cross_camera (bool): Require the match to come from another camera.

    Returns:
        SplitCoverage: Probe count and the ids of uncovered probes.
    """

    gallery = [store.position(i) for i in store.split_ids("gallery")]
    pairs = {(int(store.identities[r]), int(store.cameras[r])) for r in gallery}
    by_identity: dict = {}
    for identity, camera in pairs:
        by_identity.setdefault(identity, set()).add(camera)

    probes = store.split_ids("probe")
    uncovered = []
    for probe_id in probes.tolist():
        cams = by_identity.get(store.identity_of(probe_id), set())
        if cross_camera:
            cams = cams - {store.camera_of(probe_id)}
        if not cams:
            uncovered.append(int(probe_id))
    return SplitCoverage(probes=len(probes), uncovered=uncovered)
