"""
Report schemas.

This module defines the Pydantic schemas written to result files and
printed by the command-line interface.

Schemas:
    - RecallReport: Positive recall / precision of one candidate set.
    - EvaluationSummary: mAP and CMC of one evaluation run.
    - SweepRow: One point of an ablation sweep.
    - BlockCheck: Gradient check result of one parameter block.
    - GradcheckReport: Gradient check result of a whole model.
"""

from typing import List, Optional

from pydantic import BaseModel, Field


class RecallReport(BaseModel):
    """
    Positive recall and precision of a candidate set.

    `recall` is None (undefined) when the probe has no cross-camera positive
    in the gallery; it is never reported as 0 in that case.

    Example:
        >>> RecallReport(probe_id=1, positives=2, sampled_positives=1, candidates=4,
        ...              recall=0.5, precision=0.25).recall
        0.5
    """

    probe_id: int
    positives: int
    """Cross-camera positives present in the gallery."""

    sampled_positives: int
    """Of those, how many the candidate set contains."""

    candidates: int
    """Size of the candidate set."""

    recall: Optional[float] = None
    precision: Optional[float] = None


class EvaluationSummary(BaseModel):
    """
    Metrics of one evaluation run.

    Example:
        >>> EvaluationSummary(mAP=1.0, rank1=1.0, rank5=1.0, rank10=1.0, probes=3, valid_probes=3).rank1
        1.0
    """

    mAP: float
    rank1: float
    rank5: float
    rank10: float
    probes: int
    """Probes evaluated."""

    valid_probes: int
    """Probes with at least one valid positive (the mAP denominator)."""

    excluded_probes: int = 0
    """Probes left out of mAP / CMC for lack of a valid positive."""

    lam: Optional[float] = None
    config_hash: Optional[str] = None


class SweepRow(BaseModel):
    """One point of an ablation sweep over lam, k, k', sampler mode and layers."""

    mode: str
    k: int
    k_prime: int
    lam: float
    layers: Optional[int] = None
    checkpoint: Optional[str] = None
    mAP: float
    rank1: float
    rank5: float
    rank10: float
    recall: Optional[float] = None
    """Mean positive recall of the candidate sets (probes with positives only)."""

    precision: Optional[float] = None
    """Mean positive precision of the candidate sets."""


class BlockCheck(BaseModel):
    """Gradient check result of one parameter block."""

    name: str
    size: int
    rel_error: float
    passed: bool


class GradcheckReport(BaseModel):
    """
    Finite-difference gradient check of every trainable block.

    Example:
        >>> GradcheckReport(blocks=[], tolerance=1e-4, passed=True).passed
        True
    """

    blocks: List[BlockCheck] = Field(default_factory=list)
    tolerance: float
    passed: bool
    nodes: Optional[int] = None
