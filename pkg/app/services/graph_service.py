"""
Context graph construction.

For a probe p and its candidates G_c this module builds:

- node features X[i] = f_p - f_{g_i}, in candidate order;
- the binary support mask: support[i, j] = 1 iff g_j is one of the k'
  nearest members of G_c \\ {g_i} to g_i by gallery-gallery similarity
  on raw stored features (no self-loops, not necessarily symmetric);
- the input of the learnable relation (node features or gallery features).

Several graphs can be merged into one block-diagonal batch so that
batchnorm statistics cover all nodes of a training step.
"""

from typing import List, Optional

import numpy as np

from app.core.errors import DataValidationError
from app.models.embedding import EmbeddingStore
from app.models.graph import CandidateSet, ContextGraph
from app.schemas.config import GraphConfig
from app.services.knn_service import rank_order


def _candidate_features(candidate_ids: List[int], store: EmbeddingStore) -> np.ndarray:
    missing = [i for i in candidate_ids if not store.has_id(i)]
    if missing:
        raise DataValidationError(f"Candidate id {missing[0]} is not in the store")
    if not candidate_ids:
        return np.zeros((0, store.dim))
    return store.features[[store.position(i) for i in candidate_ids]]


def build_nodes(probe_id: int, candidate_ids: List[int], store: EmbeddingStore) -> np.ndarray:
    """
    Node feature matrix X with X[i] = f_p - f_{g_i}.

    Raises:
        DataValidationError: If the probe or a candidate id is missing.
    """

    if not store.has_id(probe_id):
        raise DataValidationError(f"Probe id {probe_id} is not in the store")
    return store.feature(probe_id)[None, :] - _candidate_features(candidate_ids, store)


def build_support(candidate_ids: List[int], store: EmbeddingStore, k_prime: int) -> np.ndarray:
    """
    Binary support mask from gallery-gallery neighbors inside G_c.

    Row i marks the min(k', n-1) members of G_c most similar to g_i,
    excluding g_i, ties broken by ascending id.

    Returns:
        np.ndarray: Boolean matrix of shape (n, n) with a zero diagonal.

    Example:
        >>> build_support([5, 6], store, 1).astype(int).tolist()  # doctest: +SKIP
        [[0, 1], [1, 0]]
    """

    features = _candidate_features(candidate_ids, store)
    n = len(candidate_ids)
    support = np.zeros((n, n), dtype=bool)
    if n < 2:
        return support
    ids = np.asarray(candidate_ids, dtype=np.int64)
    sims = features @ features.T
    width = min(k_prime, n - 1)
    others = np.arange(n)
    for i in range(n):
        keep = others != i
        order = rank_order(sims[i, keep], ids[keep])[:width]
        support[i, others[keep][order]] = True
    return support


def build_graph(
    candidates: CandidateSet,
    store: EmbeddingStore,
    cfg: Optional[GraphConfig] = None,
) -> ContextGraph:
    """
    Assemble the context graph of one probe.

    Args:
        candidates (CandidateSet): Sampler output; its labels become node labels.
        store (EmbeddingStore): Source of the features.
        cfg (GraphConfig, optional): k' and relation input; defaults apply.

    Returns:
        ContextGraph: Single-graph batch.
    """

    cfg = cfg or GraphConfig()
    ids = list(candidates.ids)
    x = build_nodes(candidates.probe_id, ids, store)
    support = build_support(ids, store, cfg.k_prime)
    edge_features = x if cfg.edge_input == "nodes" else _candidate_features(ids, store).copy()
    labels = np.asarray(candidates.labels, dtype=np.float64) if candidates.labels is not None else None
    return ContextGraph(
        probe_ids=[candidates.probe_id],
        candidate_ids=ids,
        x=x,
        support=support,
        edge_features=edge_features,
        graph_index=np.zeros(len(ids), dtype=np.int64),
        labels=labels,
    )


def merge_graphs(graphs: List[ContextGraph]) -> ContextGraph:
    """
    Merge graphs into one block-diagonal batch.

    Node order is graph order then node order; no edge crosses graphs.
    Labels are kept only when every graph has them.
    """

    if len(graphs) == 1:
        return graphs[0]
    sizes = [g.num_nodes for g in graphs]
    total = sum(sizes)
    support = np.zeros((total, total), dtype=bool)
    start = 0
    for graph, size in zip(graphs, sizes):
        support[start:start + size, start:start + size] = graph.support
        start += size

    offsets = np.cumsum([0] + [g.num_graphs for g in graphs[:-1]])
    labels = None
    if all(g.labels is not None for g in graphs):
        labels = np.concatenate([g.labels for g in graphs])
    return ContextGraph(
        probe_ids=[p for g in graphs for p in g.probe_ids],
        candidate_ids=[c for g in graphs for c in g.candidate_ids],
        x=np.concatenate([g.x for g in graphs], axis=0),
        support=support,
        edge_features=np.concatenate([g.edge_features for g in graphs], axis=0),
        graph_index=np.concatenate([g.graph_index + off for g, off in zip(graphs, offsets)]),
        labels=labels,
    )


def dump_graph(graph: ContextGraph, edge_weights: Optional[np.ndarray] = None) -> dict:
    """
    JSON-ready description of a single graph for `inspect`.

    Each node lists the candidate ids it is connected to and, when edge
    weights are given, the weight of each of those edges.
    """

    nodes = []
    for i, candidate_id in enumerate(graph.candidate_ids):
        columns = np.flatnonzero(graph.support[i])
        node = {
            "candidate_id": int(candidate_id),
            "label": None if graph.labels is None else int(graph.labels[i]),
            "neighbors": [int(graph.candidate_ids[j]) for j in columns],
        }
        if edge_weights is not None:
            node["weights"] = [float(edge_weights[i, j]) for j in columns]
        nodes.append(node)
    return {
        "probe_id": int(graph.probe_ids[0]),
        "candidate_ids": [int(c) for c in graph.candidate_ids],
        "labels": None if graph.labels is None else [int(v) for v in graph.labels],
        "nodes": nodes,
    }
