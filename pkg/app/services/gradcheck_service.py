"""
Finite-difference gradient check.

Compares the analytic gradients of `gcn_service` with central differences
of the batch focal loss, one parameter block at a time.
"""

import logging
from typing import Optional

import numpy as np

from app.core.errors import ConfigError
from app.models.embedding import EmbeddingStore
from app.models.graph import CandidateSet, ContextGraph
from app.models.params import ModelParams
from app.schemas.config import GraphConfig, TrainConfig
from app.schemas.reports import BlockCheck, GradcheckReport
from app.services.gcn_service import batch_loss, forward, loss_and_gradients
from app.services.graph_service import build_graph
from app.util.helpers import rng_for

logger = logging.getLogger(__name__)

CORRUPT_FACTOR = 2.0


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """
    ||a - n|| / max(||a|| + ||n||, 1e-12).

    Example:
        >>> relative_error(np.array([1.0]), np.array([1.0]))
        0.0
    """

    diff = np.linalg.norm(analytic - numeric)
    return float(diff / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12))


def _train_loss(graph: ContextGraph, params: ModelParams, cfg: TrainConfig) -> float:
    logits, _ = forward(graph, params, mode="train", bn_eps=cfg.bn_eps)
    loss, _ = batch_loss(logits, graph.labels, graph.graph_index, graph.num_graphs, cfg.focal_alpha, cfg.focal_gamma)
    return loss


def numeric_gradient(graph: ContextGraph, params: ModelParams, name: str, cfg: TrainConfig, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the batch loss for one block."""

    base = params[name]
    grad = np.zeros_like(base)
    for position in np.ndindex(base.shape):
        shifted = base.copy()
        shifted[position] = base[position] + h
        plus = _train_loss(graph, params.replace({name: shifted}), cfg)
        shifted[position] = base[position] - h
        minus = _train_loss(graph, params.replace({name: shifted}), cfg)
        grad[position] = (plus - minus) / (2.0 * h)
    return grad


def gradient_check(
    params: ModelParams,
    graph: ContextGraph,
    cfg: Optional[TrainConfig] = None,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    atol: float = 1e-8,
    corrupt: Optional[str] = None,
) -> GradcheckReport:
    """
    Check every trainable block against central differences.

    A block passes when its relative error is below `tolerance`, or when
    the absolute difference is below `atol`. The second rule covers
    blocks whose exact gradient is zero (the shift of phi' cancels in the
    row softmax), where the relative error only measures rounding noise.

    Args:
        params (ModelParams): Parameters to check at.
        graph (ContextGraph): Labeled graph or batch.
        cfg (TrainConfig, optional): Focal loss and batchnorm settings.
        h (float): Finite-difference step.
        tolerance (float): Relative error threshold.
        atol (float): Absolute error threshold.
        corrupt (str, optional): Block whose analytic gradient is scaled by
            `CORRUPT_FACTOR` before comparison (fault injection).

    Returns:
        GradcheckReport: One entry per trainable block, in declaration order.

    Raises:
        ConfigError: If `corrupt` names no trainable block.
    """

    cfg = cfg or TrainConfig()
    names = params.trainable_names()
    if corrupt is not None and corrupt not in names:
        raise ConfigError(f"Unknown parameter block '{corrupt}'")

    _, grads, _ = loss_and_gradients(graph, params, cfg.focal_alpha, cfg.focal_gamma, cfg.bn_eps)
    checks = []
    for name in names:
        analytic = grads[name] * CORRUPT_FACTOR if name == corrupt else grads[name]
        numeric = numeric_gradient(graph, params, name, cfg, h)
        error = relative_error(analytic, numeric)
        passed = error < tolerance or float(np.linalg.norm(analytic - numeric)) < atol
        if not passed:
            logger.warning("Gradient check failed for %s: relative error %.3e", name, error)
        checks.append(BlockCheck(name=name, size=int(analytic.size), rel_error=error, passed=passed))

    return GradcheckReport(
        blocks=checks,
        tolerance=tolerance,
        passed=all(c.passed for c in checks),
        nodes=graph.num_nodes,
    )


def random_graph(nodes: int, dim: int, k_prime: int = 8, seed: int = 0, edge_input: str = "nodes") -> ContextGraph:
    """
    Labeled context graph over random unit features.

    The probe belongs to identity 0; candidate identities are drawn at
    random with at least one positive and, for two or more nodes, one
    negative.
    """

    if nodes < 1:
        raise ConfigError(f"A gradient check graph needs at least 1 node, got {nodes}")
    rng = rng_for(seed, "gradcheck.graph")
    features = rng.standard_normal((nodes + 1, dim))
    features /= np.linalg.norm(features, axis=1, keepdims=True)
    identities = rng.integers(0, 2, size=nodes + 1)
    identities[0] = 0
    identities[1] = 0
    if nodes >= 2:
        identities[2] = 1
    store = EmbeddingStore.from_arrays(
        ids=list(range(nodes + 1)),
        identities=identities.tolist(),
        cameras=[0] * (nodes + 1),
        splits=["probe"] + ["gallery"] * nodes,
        features=features,
    )
    candidate_ids = list(range(1, nodes + 1))
    labels = [int(identities[i] == 0) for i in candidate_ids]
    candidates = CandidateSet(probe_id=0, ids=candidate_ids, labels=labels, mode="plain")
    return build_graph(candidates, store, GraphConfig(k_prime=k_prime, edge_input=edge_input))
