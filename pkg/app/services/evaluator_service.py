"""
Evaluation service.

This module ranks the gallery for every probe and scores the rankings:

- the original distance d_o = 1 - cosine similarity covers the whole gallery;
- the graph distance d_g = 1 - sigmoid(logit) exists for the sampled
  candidates only and is fused as d = d_o + lam * d_g;
- with lam > 0 the candidates come first (by fused distance), followed by
  every other gallery by d_o; with lam = 0 the whole gallery is ordered
  by d_o, which is exactly the baseline ranking;
- metrics follow the single-gallery-shot protocol: galleries sharing the
  probe identity and camera are ignored, AP averages the precision at
  every positive hit, and Rank-k is the share of probes with a positive
  in the top k.

Per-probe work reads a shared immutable store and parameters and may run
on a thread pool.
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy.special import expit

from app.core.errors import ConfigError, DataValidationError
from app.models.embedding import EmbeddingStore
from app.models.graph import CandidateSet
from app.models.params import ModelParams
from app.models.ranking import RankingResult
from app.schemas.config import EvalConfig, GraphConfig, SamplerConfig
from app.schemas.reports import EvaluationSummary, SweepRow
from app.services.gcn_service import forward
from app.services.graph_service import build_graph
from app.services.knn_service import GalleryIndex
from app.services.sampler_service import recall_report, sample
from app.util.helpers import append_jsonl, write_json

logger = logging.getLogger(__name__)

RANKS = (1, 5, 10)
RESULTS_FILE = "results.jsonl"
SUMMARY_FILE = "summary.json"

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class ProbeScores:
    """Distances of one probe before they are fused and ordered."""

    probe_id: int
    d_o: np.ndarray
    candidates: Optional[CandidateSet] = None
    d_g: Optional[np.ndarray] = None


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """Order-preserving map, on a thread pool when `workers > 1`."""

    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))

# ------------------------------------------------------------------------------
# Distances
# ------------------------------------------------------------------------------

def check_compatible(params: ModelParams, store: EmbeddingStore) -> None:
    """
    Raises:
        DataValidationError: If the parameter dimension differs from the store.
    """

    if params.dim != store.dim:
        raise DataValidationError(f"Model dimension {params.dim} does not match store dimension {store.dim}")


def gcn_distance(
    candidates: CandidateSet,
    store: EmbeddingStore,
    params: ModelParams,
    graph_cfg: Optional[GraphConfig] = None,
    bn_eps: float = 1e-5,
) -> np.ndarray:
    """
    Graph distance d_g = 1 - sigmoid(logit) of every candidate.

    Uses an eval-mode forward pass, so the result does not depend on
    which other probes are evaluated.

    Args:
        candidates (CandidateSet): Candidates of one probe.
        store (EmbeddingStore): Feature source.
        params (ModelParams): Trained parameters.
        graph_cfg (GraphConfig, optional): k' and relation input.
        bn_eps (float): Batchnorm epsilon.

    Returns:
        np.ndarray: Values in [0, 1], aligned with `candidates.ids`.
    """

    check_compatible(params, store)
    if not candidates.ids:
        return np.zeros(0)
    graph = build_graph(candidates.model_copy(update={"labels": None}), store, graph_cfg)
    logits, _ = forward(graph, params, mode="eval", bn_eps=bn_eps)
    return expit(-logits)


def fuse(d_o: np.ndarray, d_g: np.ndarray, lam: float) -> np.ndarray:
    """
    Final distance d = d_o + lam * d_g.

    Example:
        >>> float(fuse(np.array([0.3]), np.array([0.5]), 1.0)[0])
        0.8

    Raises:
        ConfigError: If `lam` is negative.
    """

    if lam < 0:
        raise ConfigError(f"lam must be >= 0, got {lam}")
    d_o = np.asarray(d_o, dtype=np.float64)
    if lam == 0:
        return d_o.copy()
    return d_o + lam * np.asarray(d_g, dtype=np.float64)

# ------------------------------------------------------------------------------
# Metrics
# ------------------------------------------------------------------------------

def average_precision(matches: Iterable[bool]) -> Optional[float]:
    """
    Mean of the precision at each positive hit of a ranked list.

    Example:
        >>> round(average_precision([True, False, True]), 4)
        0.8333
    """

    matches = np.asarray(list(matches), dtype=bool)
    hits = np.flatnonzero(matches)
    if hits.size == 0:
        return None
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def _ranking_result(
    probe_id: int,
    ranked_ids: np.ndarray,
    distances: np.ndarray,
    candidate_count: int,
    store: EmbeddingStore,
    cross_camera: bool,
) -> RankingResult:
    identity = store.identity_of(probe_id)
    rows = np.asarray([store.position(i) for i in ranked_ids.tolist()], dtype=np.int64)
    same_identity = store.identities[rows] == identity if rows.size else np.zeros(0, dtype=bool)
    excluded = np.zeros_like(same_identity)
    if cross_camera and rows.size:
        excluded = same_identity & (store.cameras[rows] == store.camera_of(probe_id))

    matches = same_identity[~excluded]
    hits = np.flatnonzero(matches)
    return RankingResult(
        probe_id=probe_id,
        gallery_ids=ranked_ids.tolist(),
        distances=distances.tolist(),
        candidate_count=candidate_count,
        excluded_ids=ranked_ids[excluded].tolist(),
        ap=average_precision(matches),
        first_hit=int(hits[0]) + 1 if hits.size else None,
    )


def summarize(results: List[RankingResult], lam: Optional[float] = None, config_hash: Optional[str] = None) -> EvaluationSummary:
    """
    mAP and Rank-1/5/10 over the probes that have a valid positive.

    Probes without one are left out and counted in `excluded_probes`.
    """

    valid = [r for r in results if r.ap is not None]
    excluded = len(results) - len(valid)
    if excluded:
        logger.warning("%d of %d probes have no valid positive and are excluded from the metrics",
                       excluded, len(results))
    if valid:
        m_ap = float(np.mean([r.ap for r in valid]))
        cmc = {k: float(np.mean([r.first_hit <= k for r in valid])) for k in RANKS}
    else:
        m_ap, cmc = 0.0, {k: 0.0 for k in RANKS}
    return EvaluationSummary(
        mAP=m_ap,
        rank1=cmc[1],
        rank5=cmc[5],
        rank10=cmc[10],
        probes=len(results),
        valid_probes=len(valid),
        excluded_probes=excluded,
        lam=lam,
        config_hash=config_hash,
    )

# ------------------------------------------------------------------------------
# Ranking
# ------------------------------------------------------------------------------

def score_probe(
    probe_id: int,
    index: GalleryIndex,
    params: Optional[ModelParams],
    sampler_cfg: SamplerConfig,
    graph_cfg: Optional[GraphConfig] = None,
    bn_eps: float = 1e-5,
) -> ProbeScores:
    """d_o over the gallery, plus candidates and d_g when a model is given."""

    store = index.store
    d_o = index.distances(store.feature(probe_id))
    if params is None:
        return ProbeScores(probe_id=probe_id, d_o=d_o)
    candidates = sample(probe_id, index, sampler_cfg, with_labels=False)
    d_g = gcn_distance(candidates, store, params, graph_cfg, bn_eps)
    return ProbeScores(probe_id=probe_id, d_o=d_o, candidates=candidates, d_g=d_g)


def order_scores(scores: ProbeScores, index: GalleryIndex, lam: float, cross_camera: bool = True) -> RankingResult:
    """
    Order the gallery of one probe and attach its metrics.

    With lam > 0 and a non-empty candidate set the result holds two blocks,
    each ascending: candidates by fused distance, then the remaining
    galleries by d_o. Ties are broken by ascending gallery id.
    """

    ids = index.ids
    if lam == 0 or scores.candidates is None or not scores.candidates.ids:
        order = np.lexsort((ids, scores.d_o))
        return _ranking_result(scores.probe_id, ids[order], scores.d_o[order], 0, index.store, cross_camera)

    candidate_ids = np.asarray(scores.candidates.ids, dtype=np.int64)
    positions = index.offsets(candidate_ids)
    fused = fuse(scores.d_o[positions], scores.d_g, lam)
    head = np.lexsort((candidate_ids, fused))

    rest = np.ones(len(ids), dtype=bool)
    rest[positions] = False
    rest_ids, rest_d = ids[rest], scores.d_o[rest]
    tail = np.lexsort((rest_ids, rest_d))

    ranked = np.concatenate([candidate_ids[head], rest_ids[tail]])
    distances = np.concatenate([fused[head], rest_d[tail]])
    return _ranking_result(scores.probe_id, ranked, distances, len(candidate_ids), index.store, cross_camera)


def rank(
    probe_id: int,
    store: EmbeddingStore,
    params: Optional[ModelParams],
    lam: float,
    sampler_cfg: Optional[SamplerConfig] = None,
    graph_cfg: Optional[GraphConfig] = None,
    cross_camera: bool = True,
    bn_eps: float = 1e-5,
    index: Optional[GalleryIndex] = None,
) -> RankingResult:
    """
    Fused ranking of the gallery for one probe.

    Args:
        probe_id (int): Probe record id.
        store (EmbeddingStore): Store holding probe and gallery.
        params (ModelParams, optional): Trained model; None ranks by d_o.
        lam (float): Weight of the graph distance.
        sampler_cfg (SamplerConfig, optional): Candidate sampler.
        graph_cfg (GraphConfig, optional): k' and relation input.
        cross_camera (bool): Ignore same-identity same-camera galleries in metrics.
        bn_eps (float): Batchnorm epsilon.
        index (GalleryIndex, optional): Prebuilt gallery index.

    Returns:
        RankingResult: Ranked gallery with AP and first hit.

    Raises:
        DataValidationError: If the probe id is unknown or the model does not fit the store.
    """

    if not store.has_id(probe_id):
        raise DataValidationError(f"Probe id {probe_id} is not in the store")
    if lam < 0:
        raise ConfigError(f"lam must be >= 0, got {lam}")
    index = index or GalleryIndex(store, splits=("gallery",))
    model = params if lam > 0 else None
    scores = score_probe(probe_id, index, model, sampler_cfg or SamplerConfig(), graph_cfg, bn_eps)
    return order_scores(scores, index, lam, cross_camera)

# ------------------------------------------------------------------------------
# Evaluation
# ------------------------------------------------------------------------------

def _probes_and_gallery(store: EmbeddingStore) -> Tuple[List[int], GalleryIndex]:
    probes = store.split_ids("probe").tolist()
    if not probes:
        raise DataValidationError("The store has no probe records")
    index = GalleryIndex(store, splits=("gallery",))
    if len(index) == 0:
        raise DataValidationError("The store has no gallery records")
    return probes, index


def evaluate_distances(
    distances: np.ndarray,
    probe_ids: Sequence[int],
    index: GalleryIndex,
    cross_camera: bool = True,
    lam: Optional[float] = None,
    config_hash: Optional[str] = None,
) -> Tuple[EvaluationSummary, List[RankingResult]]:
    """
    Metrics of a full probe x gallery distance matrix.

    Row i holds the distances of `probe_ids[i]` to the index members.
    """

    if distances.shape != (len(probe_ids), len(index)):
        raise DataValidationError(
            f"Distance matrix has shape {distances.shape}, expected ({len(probe_ids)}, {len(index)})"
        )
    results = [
        order_scores(ProbeScores(probe_id=int(p), d_o=distances[i]), index, 0.0, cross_camera)
        for i, p in enumerate(probe_ids)
    ]
    return summarize(results, lam, config_hash), results


def baseline_evaluate(
    store: EmbeddingStore,
    cross_camera: bool = True,
    config_hash: Optional[str] = None,
) -> Tuple[EvaluationSummary, List[RankingResult]]:
    """Evaluation with the original cosine distance alone."""

    probes, index = _probes_and_gallery(store)
    distances = np.stack([index.distances(store.feature(p)) for p in probes])
    return evaluate_distances(distances, probes, index, cross_camera, 0.0, config_hash)


def evaluate(
    store: EmbeddingStore,
    params: Optional[ModelParams],
    lam: float,
    sampler_cfg: Optional[SamplerConfig] = None,
    graph_cfg: Optional[GraphConfig] = None,
    eval_cfg: Optional[EvalConfig] = None,
    bn_eps: float = 1e-5,
    workers: int = 1,
    config_hash: Optional[str] = None,
) -> Tuple[EvaluationSummary, List[RankingResult]]:
    """
    Rank the gallery for every probe and compute mAP and Rank-1/5/10.

    Args:
        store (EmbeddingStore): Store with probe and gallery splits.
        params (ModelParams, optional): Trained model; unused when `lam == 0`.
        lam (float): Weight of the graph distance.
        sampler_cfg (SamplerConfig, optional): Candidate sampler.
        graph_cfg (GraphConfig, optional): k' and relation input.
        eval_cfg (EvalConfig, optional): Cross-camera protocol switch.
        bn_eps (float): Batchnorm epsilon.
        workers (int): Thread count for per-probe work.
        config_hash (str, optional): Stamped on the summary.

    Returns:
        tuple[EvaluationSummary, list[RankingResult]]: Summary and per-probe rankings.
    """

    eval_cfg = eval_cfg or EvalConfig()
    sampler_cfg = sampler_cfg or SamplerConfig()
    if lam < 0:
        raise ConfigError(f"lam must be >= 0, got {lam}")
    probes, index = _probes_and_gallery(store)
    model = params if lam > 0 else None
    if model is not None:
        check_compatible(model, store)

    def run(probe_id: int) -> RankingResult:
        scores = score_probe(probe_id, index, model, sampler_cfg, graph_cfg, bn_eps)
        return order_scores(scores, index, lam, eval_cfg.cross_camera)

    results = parallel_map(run, probes, workers)
    summary = summarize(results, lam, config_hash)
    logger.info("lam=%.3g mAP=%.4f rank1=%.4f (%d probes)", lam, summary.mAP, summary.rank1, summary.valid_probes)
    return summary, results


def sweep(
    store: EmbeddingStore,
    checkpoints: List[Tuple[str, ModelParams]],
    eval_cfg: Optional[EvalConfig] = None,
    sampler_cfg: Optional[SamplerConfig] = None,
    graph_cfg: Optional[GraphConfig] = None,
    bn_eps: float = 1e-5,
    workers: int = 1,
) -> List[SweepRow]:
    """
    Evaluate a grid of checkpoints, sampler modes, k, k' and lam.

    Empty sweep lists in `eval_cfg` fall back to the single configured
    value. Candidates and graph distances are computed once per
    (checkpoint, mode, k, k') and reused for every lam. Each row also
    carries the mean positive recall and precision of the candidate sets.

    Returns:
        list[SweepRow]: One row per grid point, in loop order.
    """

    eval_cfg = eval_cfg or EvalConfig()
    sampler_cfg = sampler_cfg or SamplerConfig()
    graph_cfg = graph_cfg or GraphConfig()
    lams = eval_cfg.lams or [eval_cfg.lam]
    ks = eval_cfg.ks or [sampler_cfg.k]
    k_primes = eval_cfg.k_primes or [graph_cfg.k_prime]
    modes = eval_cfg.modes or [sampler_cfg.mode]
    if any(lam < 0 for lam in lams):
        raise ConfigError(f"lam values must be >= 0, got {lams}")

    probes, index = _probes_and_gallery(store)
    rows: List[SweepRow] = []
    for label, params in checkpoints:
        check_compatible(params, store)
        for mode in modes:
            for k in ks:
                s_cfg = sampler_cfg.model_copy(update={"mode": mode, "k": k, "k1": min(sampler_cfg.k1, k)})
                for k_prime in k_primes:
                    g_cfg = graph_cfg.model_copy(update={"k_prime": k_prime})
                    scores = parallel_map(
                        lambda p: score_probe(p, index, params, s_cfg, g_cfg, bn_eps), probes, workers
                    )
                    reports = [recall_report(s.candidates, index, eval_cfg.cross_camera) for s in scores]
                    recalls = [r.recall for r in reports if r.recall is not None]
                    precisions = [r.precision for r in reports if r.precision is not None]
                    for lam in lams:
                        summary = summarize([order_scores(s, index, lam, eval_cfg.cross_camera) for s in scores], lam)
                        rows.append(SweepRow(
                            mode=mode, k=k, k_prime=k_prime, lam=lam,
                            layers=params.layers, checkpoint=label,
                            mAP=summary.mAP, rank1=summary.rank1, rank5=summary.rank5, rank10=summary.rank10,
                            recall=float(np.mean(recalls)) if recalls else None,
                            precision=float(np.mean(precisions)) if precisions else None,
                        ))
                        logger.info("%s mode=%s k=%d k'=%d lam=%.3g mAP=%.4f",
                                    label, mode, k, k_prime, lam, summary.mAP)
    return rows

# ------------------------------------------------------------------------------
# Output files
# ------------------------------------------------------------------------------

def write_results(out_dir: str | Path, summary: EvaluationSummary, results: List[RankingResult],
                  extra: Optional[dict] = None) -> Tuple[Path, Path]:
    """
    Write `results.jsonl` (one ranking per line) and `summary.json`.

    Returns:
        tuple[Path, Path]: Results and summary paths.
    """

    out_dir = Path(out_dir)
    results_path, summary_path = out_dir / RESULTS_FILE, out_dir / SUMMARY_FILE
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path.unlink(missing_ok=True)
    for result in results:
        append_jsonl(results_path, {**result.model_dump(), "config_hash": summary.config_hash})
    write_json(summary_path, {**summary.model_dump(), **(extra or {})})
    return results_path, summary_path


def write_plot_data(path: str | Path, rows: List[SweepRow]) -> Path:
    """Write sweep rows as CSV, one column per `SweepRow` field."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(SweepRow.model_fields))
        writer.writeheader()
        for row in rows:
            writer.writerow(row.model_dump())
    return path
