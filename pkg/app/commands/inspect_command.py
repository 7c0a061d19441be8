"""
`inspect` subcommand: dump the context graph of one probe.
"""

import argparse

from app.commands.common import (
    GRAPH_FLAGS, SAMPLER_FLAGS, add_graph_flags, add_sampler_flags, emit, load_params, load_store, resolve_config,
)
from app.core.errors import DataValidationError
from app.services.evaluator_service import check_compatible
from app.services.gcn_service import edge_weights
from app.services.graph_service import build_graph, dump_graph
from app.services.knn_service import GalleryIndex
from app.services.sampler_service import recall_report, sample

FLAGS = {"cross_camera": "eval.cross_camera", **SAMPLER_FLAGS, **GRAPH_FLAGS}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("inspect", parents=parents, help="dump the context graph of one probe")
    parser.add_argument("--store", help="embedding manifest")
    parser.add_argument("--probe", type=int, required=True, help="probe record id")
    parser.add_argument("--checkpoint", help="add learned edge weights from this checkpoint")
    parser.add_argument("--no-cross-camera", dest="cross_camera", action="store_const", const=False)
    add_sampler_flags(parser)
    add_graph_flags(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, FLAGS)
    store = load_store(cfg)
    if not store.has_id(args.probe):
        raise DataValidationError(f"Probe id {args.probe} is not in the store")

    index = GalleryIndex(store, splits=("gallery",))
    candidates = sample(args.probe, index, cfg.sampler)
    graph = build_graph(candidates, store, cfg.graph)

    weights = None
    if args.checkpoint:
        params = load_params(args.checkpoint, cfg.graph)
        check_compatible(params, store)
        weights = edge_weights(graph.edge_features, graph.support, params)

    report = recall_report(candidates, index, cfg.eval.cross_camera)
    emit({
        **dump_graph(graph, weights),
        "mode": candidates.mode,
        "recall": report.model_dump(),
        "config_hash": cfg.config_hash(),
    })
    return 0
