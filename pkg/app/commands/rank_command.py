"""
`rank` subcommand: fused gallery ranking of a single probe.
"""

import argparse

from app.commands.common import (
    GRAPH_FLAGS, SAMPLER_FLAGS, add_graph_flags, add_sampler_flags, emit, load_params, load_store, resolve_config,
)
from app.core.errors import ConfigError
from app.services import evaluator_service

FLAGS = {"lam": "eval.lam", "cross_camera": "eval.cross_camera", **SAMPLER_FLAGS, **GRAPH_FLAGS}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("rank", parents=parents, help="rank the gallery for one probe")
    parser.add_argument("--store", help="embedding manifest")
    parser.add_argument("--checkpoint", help="checkpoint file or run directory")
    parser.add_argument("--probe", type=int, required=True, help="probe record id")
    parser.add_argument("--lam", type=float)
    parser.add_argument("--top", type=int, help="only print the first N ranked galleries")
    parser.add_argument("--no-cross-camera", dest="cross_camera", action="store_const", const=False)
    add_sampler_flags(parser)
    add_graph_flags(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, FLAGS)
    store = load_store(cfg)
    if cfg.eval.lam > 0 and not args.checkpoint:
        raise ConfigError("--checkpoint is required when lam > 0")
    params = load_params(args.checkpoint, cfg.graph) if args.checkpoint else None

    result = evaluator_service.rank(
        args.probe, store, params, cfg.eval.lam, cfg.sampler, cfg.graph, cfg.eval.cross_camera, cfg.train.bn_eps,
    )
    payload = result.model_dump()
    if args.top is not None:
        payload["gallery_ids"] = payload["gallery_ids"][:args.top]
        payload["distances"] = payload["distances"][:args.top]
    emit({**payload, "lam": cfg.eval.lam, "config_hash": cfg.config_hash()})
    return 0
