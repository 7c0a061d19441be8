"""
`train` subcommand: fit the graph model on the training split.
"""

import argparse

from app.commands.common import (
    GRAPH_FLAGS, SAMPLER_FLAGS, add_graph_flags, add_sampler_flags, checkpoint_path, emit, load_store,
    require, resolve_config,
)
from app.services import trainer_service

FLAGS = {
    "lr": "train.lr",
    "momentum": "train.momentum",
    "weight_decay": "train.weight_decay",
    "epochs": "train.epochs",
    "batch": "train.batch",
    "focal_alpha": "train.focal_alpha",
    "focal_gamma": "train.focal_gamma",
    "layers": "train.layers",
    "d_e": "train.d_e",
    "hidden": "train.hidden",
    "bn_momentum": "train.bn_momentum",
    "checkpoint_every": "train.checkpoint_every",
    **SAMPLER_FLAGS,
    **GRAPH_FLAGS,
}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("train", parents=parents, help="train the graph re-ranking model")
    parser.add_argument("--store", help="embedding manifest")
    parser.add_argument("--out-dir", dest="out_dir", help="run directory for checkpoints and the training log")
    parser.add_argument("--resume", help="checkpoint file or run directory to continue from")

    group = parser.add_argument_group("training")
    group.add_argument("--lr", type=float)
    group.add_argument("--momentum", type=float)
    group.add_argument("--weight-decay", dest="weight_decay", type=float)
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch", type=int, help="graphs per step")
    group.add_argument("--focal-alpha", dest="focal_alpha", type=float)
    group.add_argument("--focal-gamma", dest="focal_gamma", type=float)
    group.add_argument("--layers", type=int, help="residual graph blocks")
    group.add_argument("--d-e", dest="d_e", type=int, help="edge relation width")
    group.add_argument("--hidden", type=int, help="MLP hidden width")
    group.add_argument("--bn-momentum", dest="bn_momentum", type=float)
    group.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    add_sampler_flags(parser)
    add_graph_flags(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, FLAGS)
    store = load_store(cfg)
    out_dir = require(cfg.out_dir, "--out-dir")

    if args.resume:
        state = trainer_service.resume(
            checkpoint_path(args.resume), store, cfg.train, cfg.sampler, cfg.graph, out_dir, cfg,
        )
    else:
        state = trainer_service.train(store, cfg.train, cfg.sampler, cfg.graph, out_dir, cfg)

    emit({
        "out_dir": out_dir,
        "epoch": state.epoch,
        "loss": state.loss_history[-1] if state.loss_history else None,
        "config_hash": cfg.config_hash(),
    })
    return 0
