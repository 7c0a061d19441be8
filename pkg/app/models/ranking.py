"""
Ranking model definitions.

This module defines the per-probe output of the evaluator: the fused
ranking of the gallery and the average precision of that ranking.
"""

from typing import List, Optional

from pydantic import BaseModel, Field, model_validator


class RankingResult(BaseModel):
    """
    Fused ranking of the gallery for one probe.

    `gallery_ids` and `distances` are aligned. The ranking has two blocks:
    the first `candidate_count` entries are the sampled candidates sorted by
    ascending fused distance, the rest are the other galleries sorted by
    ascending original distance. Each block is ascending on its own; with
    no candidate block (lam = 0 or no model) the whole list is ascending.
    Entries listed in `excluded_ids` (same identity, same camera) stay in
    the ranking but are ignored by the metrics.

    Example:
        >>> result = RankingResult(probe_id=0, gallery_ids=[4, 9], distances=[0.2, 0.7], ap=1.0)
        >>> result.gallery_ids[0]
        4
    """

    probe_id: int
    """Id of the probe."""

    gallery_ids: List[int] = Field(default_factory=list)
    """Gallery ids in rank order."""

    distances: List[float] = Field(default_factory=list)
    """Final distance of each ranked gallery: fused in the candidate block, original after it."""

    candidate_count: int = Field(default=0, ge=0)
    """Number of leading entries that came from the candidate set."""

    excluded_ids: List[int] = Field(default_factory=list)
    """Galleries removed from metric computation."""

    ap: Optional[float] = None
    """Average precision, or None when the probe has no valid positive."""

    first_hit: Optional[int] = None
    """1-based rank of the first valid positive, or None."""

    @model_validator(mode="after")
    def check_order(self):
        if len(self.distances) != len(self.gallery_ids):
            raise ValueError(f"{len(self.gallery_ids)} gallery ids but {len(self.distances)} distances")
        if self.candidate_count > len(self.gallery_ids):
            raise ValueError(f"candidate_count {self.candidate_count} exceeds the ranking length")
        for block in (self.distances[:self.candidate_count], self.distances[self.candidate_count:]):
            if any(b < a for a, b in zip(block, block[1:])):
                raise ValueError("distances must be ascending within the candidate block and after it")
        return self
