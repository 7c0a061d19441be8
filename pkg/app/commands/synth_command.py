"""
`synth` subcommand: generate a labeled synthetic embedding store.
"""

import argparse
import logging

from app.commands.common import emit, resolve_config
from app.services import embedding_store_service

logger = logging.getLogger(__name__)

FLAGS = {
    "identities": "synth.identities",
    "cameras": "synth.cameras",
    "per_camera": "synth.per_camera",
    "dim": "synth.dim",
    "sigma": "synth.sigma",
    "camera_offset": "synth.camera_offset",
    "camera_arc": "synth.camera_arc",
    "train_fraction": "synth.train_fraction",
}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("synth", parents=parents, help="generate a synthetic embedding store")
    parser.add_argument("--out", required=True, help="manifest path to write")
    parser.add_argument("--identities", type=int)
    parser.add_argument("--cameras", type=int)
    parser.add_argument("--per-camera", dest="per_camera", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--camera-offset", dest="camera_offset", type=float)
    parser.add_argument("--camera-arc", dest="camera_arc", type=float, help="degrees spanned by the camera directions")
    parser.add_argument("--train-fraction", dest="train_fraction", type=float)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    """
    Generate the store and write manifest + payload.

    Output:
        {"manifest": ..., "payload": ..., "count": ..., "dim": ..., "config_hash": ...}
    """

    cfg = resolve_config(args, FLAGS)
    store = embedding_store_service.synth_generate(cfg.synth)
    payload = embedding_store_service.write(store, args.out)
    logger.info("Wrote %d records to %s", len(store), args.out)
    emit({
        "manifest": str(args.out),
        "payload": str(payload),
        "count": len(store),
        "dim": store.dim,
        "config_hash": cfg.config_hash(),
    })
    return 0
