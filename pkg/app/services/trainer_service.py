"""
Training service.

This module turns the training split into labeled context graphs and
fits the graph model on them:

- every training image acts once as a probe; its candidates are drawn
  from the remaining training images with the hard gallery sampler;
- graphs are sampled once, then each epoch visits them in a freshly
  shuffled order, a few graphs per optimizer step;
- per-epoch losses go to a line-delimited JSON log and checkpoints are
  written at epoch 0, every `checkpoint_every` epochs and at the end.
"""

import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np
from tqdm import tqdm

from app.core.errors import DataValidationError, NumericError
from app.db.checkpoints import load_checkpoint, save_checkpoint
from app.models.embedding import EmbeddingStore
from app.models.graph import ContextGraph
from app.models.params import TrainState
from app.schemas.config import GraphConfig, RunConfig, SamplerConfig, TrainConfig
from app.services.gcn_service import init_params_from_config, loss_and_gradients, sgd_step, update_running_stats
from app.services.graph_service import build_graph, merge_graphs
from app.services.knn_service import GalleryIndex
from app.services.sampler_service import sample
from app.util.helpers import append_jsonl, rng_for

logger = logging.getLogger(__name__)

TRAIN_LOG = "train_log.jsonl"


def build_training_graphs(
    store: EmbeddingStore,
    sampler_cfg: Optional[SamplerConfig] = None,
    graph_cfg: Optional[GraphConfig] = None,
) -> List[ContextGraph]:
    """
    Sample one labeled context graph per training image.

    The candidate pool of an image is every other training image; budgets
    are clamped to the pool size. Images whose candidates hold no
    positive are skipped and counted in the log.

    Args:
        store (EmbeddingStore): Store with a `train` split.
        sampler_cfg (SamplerConfig, optional): Sampler mode and budgets; the
            same sampler builds the graphs seen at evaluation.
        graph_cfg (GraphConfig, optional): k' and relation input.

    Returns:
        list[ContextGraph]: Graphs in training-id order.

    Raises:
        DataValidationError: If the training split has fewer than 2 images.
    """

    sampler_cfg = sampler_cfg or SamplerConfig()
    index = GalleryIndex(store, splits=("train",))
    if len(index) < 2:
        raise DataValidationError(f"Training split holds {len(index)} images, at least 2 are needed")

    cfg = sampler_cfg.clamped(len(index) - 1)
    graphs, skipped = [], 0
    for probe_id in index.ids.tolist():
        candidates = sample(probe_id, index.without(probe_id), cfg)
        if candidates.positives == 0:
            skipped += 1
            continue
        graphs.append(build_graph(candidates, store, graph_cfg))

    if skipped:
        logger.info("Skipped %d of %d training probes without a positive candidate", skipped, len(index))
    if not graphs:
        raise DataValidationError("No training probe has a positive candidate")
    logger.info("Built %d training graphs (%s, k1=%d, k2=%d, k=%d)", len(graphs), cfg.mode, cfg.k1, cfg.k2, cfg.k)
    return graphs


def init_state(dim: int, cfg: TrainConfig) -> TrainState:
    """Fresh parameters, empty momentum and the seeded shuffler state."""

    params = init_params_from_config(dim, cfg)
    return TrainState(params=params, rng_state=rng_for(cfg.seed, "train.shuffle").bit_generator.state)


def _shuffler(state: TrainState, cfg: TrainConfig) -> np.random.Generator:
    rng = rng_for(cfg.seed, "train.shuffle")
    if state.rng_state is not None:
        rng.bit_generator.state = state.rng_state
    return rng


def run_epoch(graphs: List[ContextGraph], state: TrainState, cfg: TrainConfig, rng: np.random.Generator) -> TrainState:
    """
    One pass over shuffled batches of `cfg.batch` graphs.

    Raises:
        NumericError: If a batch loss is not finite.
    """

    params, momentum = state.params, dict(state.momentum)
    epoch = state.epoch + 1
    order = rng.permutation(len(graphs))
    losses = []
    for start in range(0, len(order), cfg.batch):
        batch = merge_graphs([graphs[i] for i in order[start:start + cfg.batch]])
        loss, grads, cache = loss_and_gradients(batch, params, cfg.focal_alpha, cfg.focal_gamma, cfg.bn_eps)
        if not np.isfinite(loss):
            raise NumericError(f"Non-finite loss at epoch {epoch}, step {start // cfg.batch}")
        params, momentum = sgd_step(params, grads, momentum, cfg)
        params = update_running_stats(params, cache, cfg.bn_momentum)
        losses.append(loss)

    return TrainState(
        params=params,
        momentum=momentum,
        epoch=epoch,
        loss_history=[*state.loss_history, float(np.mean(losses))],
        rng_state=rng.bit_generator.state,
    )


def fit(
    graphs: List[ContextGraph],
    state: TrainState,
    cfg: TrainConfig,
    out_dir: Optional[str | Path] = None,
    run_config: Optional[RunConfig] = None,
) -> TrainState:
    """
    Train from `state` until `cfg.epochs` epochs are complete.

    Args:
        graphs (list[ContextGraph]): Labeled training graphs.
        state (TrainState): Starting state (fresh or restored).
        cfg (TrainConfig): Optimizer and schedule.
        out_dir (str | Path, optional): Run directory for checkpoints and the log.
        run_config (RunConfig, optional): Embedded in checkpoint sidecars.

    Returns:
        TrainState: State after the last epoch.

    Raises:
        NumericError: On a non-finite loss or gradient; checkpoints already
            written stay in place.
    """

    config = run_config.model_dump(mode="json") if run_config else None
    config_hash = run_config.config_hash() if run_config else None
    if out_dir is not None and state.epoch == 0:
        save_checkpoint(out_dir, state, config, config_hash)

    rng = _shuffler(state, cfg)
    quiet = not sys.stderr.isatty() or logger.getEffectiveLevel() > logging.INFO
    epochs = tqdm(range(state.epoch + 1, cfg.epochs + 1), desc="train", unit="epoch", disable=quiet)
    for epoch in epochs:
        started = time.perf_counter()
        try:
            state = run_epoch(graphs, state, cfg, rng)
        except NumericError:
            logger.error("Training aborted at epoch %d; last checkpoint kept", epoch)
            raise
        loss = state.loss_history[-1]
        epochs.set_postfix(loss=f"{loss:.4f}")
        logger.debug("Epoch %d loss %.6f", epoch, loss)

        if out_dir is not None:
            append_jsonl(Path(out_dir) / TRAIN_LOG, {
                "epoch": epoch,
                "loss": loss,
                "wall_time": time.perf_counter() - started,
                "config_hash": config_hash,
            })
            if epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs:
                save_checkpoint(out_dir, state, config, config_hash)

    if state.loss_history:
        logger.info("Training finished at epoch %d, loss %.6f", state.epoch, state.loss_history[-1])
    return state


def train(
    store: EmbeddingStore,
    train_cfg: TrainConfig,
    sampler_cfg: Optional[SamplerConfig] = None,
    graph_cfg: Optional[GraphConfig] = None,
    out_dir: Optional[str | Path] = None,
    run_config: Optional[RunConfig] = None,
) -> TrainState:
    """
    Sample the training graphs and fit a fresh model.

    With `epochs = 0` the initialized state is returned unchanged (and,
    with an `out_dir`, saved as the epoch-0 checkpoint).
    """

    graphs = build_training_graphs(store, sampler_cfg, graph_cfg)
    return fit(graphs, init_state(store.dim, train_cfg), train_cfg, out_dir, run_config)


def resume(
    checkpoint: str | Path,
    store: EmbeddingStore,
    train_cfg: TrainConfig,
    sampler_cfg: Optional[SamplerConfig] = None,
    graph_cfg: Optional[GraphConfig] = None,
    out_dir: Optional[str | Path] = None,
    run_config: Optional[RunConfig] = None,
) -> TrainState:
    """
    Continue a run from a checkpoint, keeping its epoch numbering.

    Momentum buffers and the shuffler state are restored, so the result
    is bitwise identical to a run that never stopped.

    Raises:
        DataValidationError: If the checkpoint dimension differs from the store.
    """

    state, _ = load_checkpoint(checkpoint)
    if state.params.dim != store.dim:
        raise DataValidationError(
            f"Checkpoint {checkpoint} has dimension {state.params.dim}, store has {store.dim}"
        )
    logger.info("Resuming from %s at epoch %d", checkpoint, state.epoch)
    graphs = build_training_graphs(store, sampler_cfg, graph_cfg)
    return fit(graphs, state, train_cfg, out_dir or Path(checkpoint).parent, run_config)
