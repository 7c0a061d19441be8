"""
Neighbor, candidate and graph model definitions.

This module defines the data models that flow from similarity search to
graph reasoning:

- NeighborList: ordered top-k neighbors of one query.
- CandidateSet: ordered gallery candidates G_c chosen for one probe.
- ContextGraph: node features, binary support mask and node labels.
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class NeighborList(BaseModel):
    """
    Ordered neighbors of one query, by similarity descending then id ascending.

    Example:
        >>> nl = NeighborList(query_id=4, ids=[7, 2], scores=[0.9, 0.5])
        >>> nl.ids[0]
        7
    """

    query_id: Optional[int] = None
    """Id of the query record, or None for a free query vector."""

    ids: List[int] = Field(default_factory=list)
    """Neighbor ids in rank order."""

    scores: List[float] = Field(default_factory=list)
    """Similarity of each neighbor to the query."""

    def __len__(self) -> int:
        return len(self.ids)


class CandidateSet(BaseModel):
    """
    Gallery candidates G_c selected by a sampler for one probe.

    Example:
        >>> cs = CandidateSet(probe_id=0, ids=[3, 5, 4], labels=[1, 0, 1], mode="hgs")
        >>> cs.positives
        2
    """

    probe_id: int
    """Id of the probe record."""

    ids: List[int] = Field(default_factory=list)
    """Candidate gallery ids in sampler insertion order."""

    labels: Optional[List[int]] = None
    """1 when a candidate shares the probe identity, 0 otherwise; None when unknown."""

    mode: str = "plain"
    """Sampler that produced the set (`plain` or `hgs`)."""

    @model_validator(mode="after")
    def check_members(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("candidate ids must be distinct")
        if self.probe_id in self.ids:
            raise ValueError(f"probe {self.probe_id} cannot be its own candidate")
        if self.labels is not None and len(self.labels) != len(self.ids):
            raise ValueError("labels must align with candidate ids")
        return self

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def positives(self) -> int:
        """Number of positive candidates (0 when labels are unknown)."""

        return int(sum(self.labels)) if self.labels is not None else 0


class ContextGraph(BaseModel):
    """
    Context graph of one probe, or a block-diagonal batch of several.

    Row i of `x` is f_p - f_{g_i}; `support[i, j]` is True when g_j is one
    of the k' nearest candidates of g_i. `edge_features` feed the learnable
    relation and equal `x` unless raw gallery features were requested.
    `graph_index` tells which probe each node belongs to when several
    graphs are merged into one batch.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    probe_ids: List[int]
    """Probe id of every graph in the batch (one entry for a single graph)."""

    candidate_ids: List[int]
    """Gallery id of every node, in node order."""

    x: np.ndarray
    """Node feature matrix, shape (n, d)."""

    support: np.ndarray
    """Binary edge-support mask, shape (n, n), zero diagonal."""

    edge_features: np.ndarray
    """Input of the relation transforms, shape (n, d)."""

    graph_index: np.ndarray
    """Graph number of every node, shape (n,)."""

    labels: Optional[np.ndarray] = None
    """Binary node labels, shape (n,), when identities are known."""

    @model_validator(mode="after")
    def check_shapes(self):
        n = self.x.shape[0]
        if self.support.shape != (n, n):
            raise ValueError(f"support has shape {self.support.shape}, expected ({n}, {n})")
        if n and np.any(np.diag(self.support)):
            raise ValueError("support must have a zero diagonal")
        if self.edge_features.shape[0] != n:
            raise ValueError("edge features must have one row per node")
        if self.graph_index.shape != (n,):
            raise ValueError("graph_index must have one entry per node")
        if len(self.candidate_ids) != n:
            raise ValueError("candidate_ids must have one entry per node")
        if self.labels is not None and self.labels.shape != (n,):
            raise ValueError("labels must have one entry per node")
        return self

    @property
    def num_nodes(self) -> int:
        return int(self.x.shape[0])

    @property
    def num_graphs(self) -> int:
        return len(self.probe_ids)

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])
