"""
Helpers shared by the subcommands.

Every subcommand resolves its configuration the same way: the JSON
config file given with `--config` (or the defaults), then the flags the
user set, then `--seed`. Command output goes to stdout as JSON; logs go
to stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, Optional

from pydantic import ValidationError

from app.core.errors import ConfigError, DataValidationError
from app.core.settings import get_settings
from app.db.checkpoints import latest_checkpoint, load_checkpoint
from app.models.embedding import EmbeddingStore
from app.models.params import ModelParams
from app.schemas.config import GraphConfig, RunConfig
from app.services import embedding_store_service

logger = logging.getLogger(__name__)

SAMPLER_FLAGS = {"k1": "sampler.k1", "k2": "sampler.k2", "k": "sampler.k", "sampler": "sampler.mode"}
GRAPH_FLAGS = {"k_prime": "graph.k_prime", "edge_input": "graph.edge_input"}


def add_sampler_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("sampler")
    group.add_argument("--k1", type=int, help="first-hop neighbors")
    group.add_argument("--k2", type=int, help="second-hop neighbors")
    group.add_argument("--k", type=int, help="candidate budget")
    group.add_argument("--sampler", choices=["plain", "hgs"], help="candidate sampler")


def add_graph_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("graph")
    group.add_argument("--k-prime", dest="k_prime", type=int, help="neighbors connected per node")
    group.add_argument("--edge-input", dest="edge_input", choices=["nodes", "gallery"],
                       help="input of the learnable edge weights")


def overrides_from(args: argparse.Namespace, mapping: Dict[str, str]) -> Dict[str, object]:
    """Dotted config keys for the flags the user actually set."""

    return {dotted: getattr(args, flag, None) for flag, dotted in mapping.items()}


def resolve_config(args: argparse.Namespace, mapping: Dict[str, str]) -> RunConfig:
    """
    Config file, then flag overrides, then the seed.

    Raises:
        ConfigError: On an unreadable file or invalid values.
    """

    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = overrides_from(args, mapping)
    overrides["store"] = getattr(args, "store", None)
    overrides["out_dir"] = getattr(args, "out_dir", None)
    return cfg.with_overrides(overrides).with_seed(args.seed)


def resolve_workers(args: argparse.Namespace, cfg: RunConfig) -> int:
    return args.workers or cfg.eval.workers or get_settings().workers


def require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ConfigError(f"{flag} is required (flag or config file)")
    return value


def load_store(cfg: RunConfig) -> EmbeddingStore:
    return embedding_store_service.load(require(cfg.store, "--store"))


def checkpoint_path(path: str) -> Path:
    """A checkpoint file, or the latest checkpoint of a run directory."""

    candidate = Path(path)
    if candidate.is_dir():
        latest = latest_checkpoint(candidate)
        if latest is None:
            raise ConfigError(f"No checkpoint found in {candidate}")
        return latest
    return candidate


def load_params(path: str, graph_cfg: Optional[GraphConfig] = None) -> ModelParams:
    """
    Parameters of a checkpoint, checked against the graph settings of the command.

    The sidecar records the graph settings the model was trained with. A
    different edge input makes the learned relation read other features
    and is refused; a different k' only changes the edge support and is
    logged.

    Args:
        path (str): Checkpoint file or run directory.
        graph_cfg (GraphConfig, optional): Graph settings the command will use;
            None skips the check.

    Raises:
        ConfigError: If the edge input differs from the trained one.
        DataValidationError: If the recorded graph settings are malformed.
    """

    bin_path = checkpoint_path(path)
    state, meta = load_checkpoint(bin_path)
    trained = (meta.get("config") or {}).get("graph")
    if graph_cfg is None or trained is None:
        return state.params
    try:
        trained = GraphConfig.model_validate(trained)
    except ValidationError as exc:
        raise DataValidationError(f"Checkpoint {bin_path} records invalid graph settings: {exc}") from exc

    if trained.edge_input != graph_cfg.edge_input:
        raise ConfigError(
            f"Checkpoint {bin_path} was trained with edge input '{trained.edge_input}', "
            f"got '{graph_cfg.edge_input}' (pass --edge-input {trained.edge_input})"
        )
    if trained.k_prime != graph_cfg.k_prime:
        logger.warning("Checkpoint %s was trained with k'=%d, ranking with k'=%d",
                       bin_path, trained.k_prime, graph_cfg.k_prime)
    return state.params


def emit(payload: dict) -> None:
    """Print a JSON document on stdout."""

    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    sys.stdout.flush()
