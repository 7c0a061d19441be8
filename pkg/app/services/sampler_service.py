"""
Gallery candidate samplers.

This module selects the gallery candidates G_c of a probe:

- the plain sampler keeps the k nearest galleries;
- the hard gallery sampler (HGS) starts from the k1 nearest galleries
  N(p, k1) and, for each of them in rank order, appends its k2 nearest
  galleries N(g_i, k2) minus N(p, k1), skipping ids already in G_c,
  until |G_c| reaches k. Easy positives act as a bridge to hard positives
  that the probe alone would not reach.

It also reports the positive recall and precision of a candidate set.
"""

import logging
from typing import List, Optional

import numpy as np

from app.core.errors import ConfigError
from app.models.embedding import EmbeddingStore
from app.models.graph import CandidateSet
from app.schemas.config import SamplerConfig
from app.schemas.reports import RecallReport
from app.services.knn_service import GalleryIndex

logger = logging.getLogger(__name__)


def candidate_labels(probe_id: int, ids: List[int], store: EmbeddingStore) -> List[int]:
    """1 for every candidate sharing the probe identity, else 0."""

    identity = store.identity_of(probe_id)
    return [int(store.identity_of(i) == identity) for i in ids]


def plain_sample(probe_id: int, index: GalleryIndex, k: int, with_labels: bool = True) -> CandidateSet:
    """
    Plain sampler: the k nearest galleries, in rank order.

    Args:
        probe_id (int): Id of the probe record.
        index (GalleryIndex): Searchable gallery.
        k (int): Candidate budget; clamps to the gallery size.
        with_labels (bool): Attach identity-match labels.

    Returns:
        CandidateSet: G_c = topk(probe, gallery, k).
    """

    store = index.store
    neighbors = index.topk(probe_id, store.feature(probe_id), k)
    labels = candidate_labels(probe_id, neighbors.ids, store) if with_labels else None
    return CandidateSet(probe_id=probe_id, ids=neighbors.ids, labels=labels, mode="plain")


def hgs_sample(probe_id: int, index: GalleryIndex, cfg: SamplerConfig, with_labels: bool = True) -> CandidateSet:
    """
    Two-hop hard gallery sampler.

    G_c starts as N(p, k1). For i = 1..k1 in first-hop rank order,
    N'(g_i, k2) = N(g_i, k2) - N(p, k1) is computed over the gallery
    (excluding g_i itself) and its ids are appended in rank order, skipping
    ids already in G_c, stopping as soon as |G_c| = k. If the budget is not
    reached after all expansions the set is returned short.

    Args:
        probe_id (int): Id of the probe record.
        index (GalleryIndex): Searchable gallery (the probe is not a member).
        cfg (SamplerConfig): Budgets k1, k2, k.
        with_labels (bool): Attach identity-match labels.

    Returns:
        CandidateSet: Candidates in insertion order.

    Raises:
        ConfigError: If the gallery holds fewer than k1 records.
    """

    if len(index) < cfg.k1:
        raise ConfigError(f"Gallery of {len(index)} records is smaller than k1={cfg.k1}")

    store = index.store
    first_hop = index.topk(probe_id, store.feature(probe_id), cfg.k1).ids
    first_hop_set = set(first_hop)
    selected = list(first_hop)
    chosen = set(selected)

    for gallery_id in first_hop:
        if len(selected) >= cfg.k:
            break
        for neighbor in index.member_neighbors(gallery_id, cfg.k2).ids:
            if neighbor in first_hop_set or neighbor in chosen or neighbor == probe_id:
                continue
            selected.append(neighbor)
            chosen.add(neighbor)
            if len(selected) >= cfg.k:
                break

    if len(selected) < cfg.k:
        logger.debug("Probe %s: candidate set short (%d of %d)", probe_id, len(selected), cfg.k)
    labels = candidate_labels(probe_id, selected, store) if with_labels else None
    return CandidateSet(probe_id=probe_id, ids=selected, labels=labels, mode="hgs")


def sample(probe_id: int, index: GalleryIndex, cfg: SamplerConfig, with_labels: bool = True) -> CandidateSet:
    """Dispatch on `cfg.mode`."""

    if cfg.mode == "plain":
        return plain_sample(probe_id, index, cfg.k, with_labels=with_labels)
    return hgs_sample(probe_id, index, cfg, with_labels=with_labels)


def positive_ids(probe_id: int, index: GalleryIndex, cross_camera: bool = True) -> np.ndarray:
    """Gallery ids sharing the probe identity (on other cameras when `cross_camera`)."""

    store = index.store
    identity = store.identity_of(probe_id)
    mask = store.identities[index.rows] == identity
    if cross_camera:
        mask &= store.cameras[index.rows] != store.camera_of(probe_id)
    return index.ids[mask]


def recall_report(candidates: CandidateSet, index: GalleryIndex, cross_camera: bool = True) -> RecallReport:
    """
    Positive recall and precision of a candidate set.

    recall = |positives in G_c| / |all cross-camera positives|;
    precision = positive fraction of G_c. Recall is None (undefined) for a
    probe without positives; precision is None for an empty set.

    Args:
        candidates (CandidateSet): Sampler output.
        index (GalleryIndex): Gallery the candidates were drawn from.
        cross_camera (bool): Count only positives from other cameras.
    """

    positives = set(positive_ids(candidates.probe_id, index, cross_camera).tolist())
    hits = sum(1 for i in candidates.ids if i in positives)
    recall: Optional[float] = hits / len(positives) if positives else None
    precision: Optional[float] = hits / len(candidates.ids) if candidates.ids else None
    return RecallReport(
        probe_id=candidates.probe_id,
        positives=len(positives),
        sampled_positives=hits,
        candidates=len(candidates.ids),
        recall=recall,
        precision=precision,
    )
