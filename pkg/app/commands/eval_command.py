"""
`eval` subcommand: mAP / CMC of fused rankings, single point or sweep.
"""

import argparse
import logging
from pathlib import Path

from app.commands.common import (
    GRAPH_FLAGS, SAMPLER_FLAGS, add_graph_flags, add_sampler_flags, checkpoint_path, emit, load_params,
    load_store, resolve_config, resolve_workers,
)
from app.core.errors import ConfigError
from app.services import evaluator_service
from app.util.helpers import write_json

logger = logging.getLogger(__name__)

FLAGS = {
    "lam": "eval.lam",
    "lams": "eval.lams",
    "ks": "eval.ks",
    "k_primes": "eval.k_primes",
    "modes": "eval.modes",
    "cross_camera": "eval.cross_camera",
    **SAMPLER_FLAGS,
    **GRAPH_FLAGS,
}

SWEEP_FILE = "sweep.json"


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("eval", parents=parents, help="evaluate rankings on the probe split")
    parser.add_argument("--store", help="embedding manifest")
    parser.add_argument("--checkpoint", nargs="*", default=[],
                        help="checkpoint files or run directories (several make a layer/epoch sweep)")
    parser.add_argument("--out-dir", dest="out_dir", help="directory for results.jsonl and summary.json")
    parser.add_argument("--baseline", action="store_true", help="rank by the original distance only")
    parser.add_argument("--lam", type=float, help="graph distance weight")
    parser.add_argument("--no-cross-camera", dest="cross_camera", action="store_const", const=False,
                        help="keep same-camera positives in the metrics")
    parser.add_argument("--emit-plot-data", dest="plot_data", help="CSV file receiving the sweep rows")

    sweep = parser.add_argument_group("sweep")
    sweep.add_argument("--lams", type=float, nargs="+")
    sweep.add_argument("--ks", type=int, nargs="+")
    sweep.add_argument("--k-primes", dest="k_primes", type=int, nargs="+")
    sweep.add_argument("--modes", nargs="+", choices=["plain", "hgs"])
    add_sampler_flags(parser)
    add_graph_flags(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, FLAGS)
    store = load_store(cfg)
    workers = resolve_workers(args, cfg)
    config_hash = cfg.config_hash()
    is_sweep = bool(cfg.eval.lams or cfg.eval.ks or cfg.eval.k_primes or cfg.eval.modes
                    or len(args.checkpoint) > 1 or args.plot_data)

    if args.baseline:
        summary, results = evaluator_service.baseline_evaluate(store, cfg.eval.cross_camera, config_hash)
        return _finish(cfg.out_dir, summary, results)

    if not args.checkpoint:
        if is_sweep or cfg.eval.lam > 0:
            raise ConfigError("--checkpoint is required unless --baseline is given or lam is 0")
        summary, results = evaluator_service.evaluate(
            store, None, 0.0, cfg.sampler, cfg.graph, cfg.eval, cfg.train.bn_eps, workers, config_hash,
        )
        return _finish(cfg.out_dir, summary, results)

    if is_sweep:
        checkpoints = [(checkpoint_path(p).name, load_params(p, cfg.graph)) for p in args.checkpoint]
        rows = evaluator_service.sweep(store, checkpoints, cfg.eval, cfg.sampler, cfg.graph, cfg.train.bn_eps, workers)
        payload = {"rows": [row.model_dump() for row in rows], "config_hash": config_hash}
        if cfg.out_dir:
            write_json(Path(cfg.out_dir) / SWEEP_FILE, payload)
        if args.plot_data:
            evaluator_service.write_plot_data(args.plot_data, rows)
            logger.info("Wrote %d sweep rows to %s", len(rows), args.plot_data)
        emit(payload)
        return 0

    params = load_params(args.checkpoint[0], cfg.graph)
    summary, results = evaluator_service.evaluate(
        store, params, cfg.eval.lam, cfg.sampler, cfg.graph, cfg.eval, cfg.train.bn_eps, workers, config_hash,
    )
    return _finish(cfg.out_dir, summary, results)


def _finish(out_dir, summary, results) -> int:
    if out_dir:
        evaluator_service.write_results(out_dir, summary, results)
    emit(summary.model_dump())
    return 0
