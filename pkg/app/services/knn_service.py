"""
Exact nearest-neighbor search.

Similarity is the dot product of two features; on L2-normalized features
it is the cosine similarity and the original distance is
``d_o = 1 - similarity``. Search is exhaustive and deterministic:
neighbors are ordered by similarity descending, ties by ascending id.
"""

from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from app.core.errors import DataValidationError
from app.models.embedding import EmbeddingStore
from app.models.graph import NeighborList


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """
    Dot-product similarity of two features.

    Raises:
        DataValidationError: If the dimensions differ.

    Example:
        >>> similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        0.0
    """

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataValidationError(f"Dimension mismatch: {a.shape} vs {b.shape}")
    return float(a @ b)


def rank_order(scores: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Positions sorted by score descending, then id ascending."""

    return np.lexsort((ids, -scores))


def topk(
    query_id: Optional[int],
    query_feature: np.ndarray,
    candidate_ids: np.ndarray,
    candidate_features: np.ndarray,
    k: int,
) -> NeighborList:
    """
    Exact top-k neighbors of a query among candidates.

    The query itself is skipped when `query_id` is one of the candidates.
    `k` clamps to the number of remaining candidates.

    Args:
        query_id (int, optional): Id of the query record.
        query_feature (np.ndarray): Query vector, shape (d,).
        candidate_ids (np.ndarray): Candidate ids, shape (m,).
        candidate_features (np.ndarray): Candidate features, shape (m, d).
        k (int): Number of neighbors requested (>= 1).

    Returns:
        NeighborList: min(k, m) neighbors in deterministic order.
    """

    candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
    if candidate_features.shape[1] != query_feature.shape[0]:
        raise DataValidationError(
            f"Dimension mismatch: query has {query_feature.shape[0]}, candidates have {candidate_features.shape[1]}"
        )
    scores = candidate_features @ query_feature
    if query_id is not None:
        keep = candidate_ids != query_id
        candidate_ids, scores = candidate_ids[keep], scores[keep]
    order = rank_order(scores, candidate_ids)[:max(0, k)]
    return NeighborList(
        query_id=query_id,
        ids=candidate_ids[order].tolist(),
        scores=scores[order].tolist(),
    )


class GalleryIndex:
    """
    Exhaustive index over the records of one or more splits.

    The member-to-member neighbor lists used by the second sampling hop
    are memoized per (member, k). The index never mutates the store, so
    per-query calls may run concurrently.

    Example:
        >>> index = GalleryIndex(store, splits=("gallery",))  # doctest: +SKIP
        >>> index.topk(probe_id, store.feature(probe_id), 10).ids  # doctest: +SKIP
    """

    def __init__(self, store: EmbeddingStore, splits: Iterable[str] = ("gallery",), ids: Optional[Iterable[int]] = None):
        self.store = store
        if ids is None:
            wanted = set(splits)
            rows = [r for r, split in enumerate(store.splits) if split in wanted]
        else:
            rows = [store.position(i) for i in ids]
        self.rows = np.asarray(rows, dtype=np.int64)
        self.ids = store.ids[self.rows] if len(rows) else np.zeros(0, dtype=np.int64)
        self.features = store.features[self.rows] if len(rows) else np.zeros((0, store.dim))
        self._offsets = {record_id: k for k, record_id in enumerate(self.ids.tolist())}
        self._cache: Dict[Tuple[int, int], NeighborList] = {}

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __contains__(self, record_id: int) -> bool:
        return int(record_id) in self._offsets

    def offsets(self, record_ids: Iterable[int]) -> np.ndarray:
        """Member positions of the given ids."""

        return np.asarray([self._offsets[int(i)] for i in record_ids], dtype=np.int64)

    def without(self, record_id: int) -> "GalleryIndex":
        """Index over the same members minus one record."""

        return GalleryIndex(self.store, ids=[i for i in self.ids.tolist() if i != record_id])

    def topk(self, query_id: Optional[int], query_feature: np.ndarray, k: int) -> NeighborList:
        """Top-k members for a query vector, skipping the query id itself."""

        return topk(query_id, query_feature, self.ids, self.features, k)

    def member_neighbors(self, member_id: int, k: int) -> NeighborList:
        """Top-k members nearest to another member, excluding that member."""

        key = (int(member_id), int(k))
        if key not in self._cache:
            self._cache[key] = self.topk(member_id, self.store.feature(member_id), k)
        return self._cache[key]

    def similarities(self, query_feature: np.ndarray) -> np.ndarray:
        """Similarity of the query to every member, in member order."""

        return self.features @ query_feature

    def distances(self, query_feature: np.ndarray) -> np.ndarray:
        """Original distance d_o = 1 - similarity to every member, in member order."""

        return 1.0 - self.similarities(query_feature)
