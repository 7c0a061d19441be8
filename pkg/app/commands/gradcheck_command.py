"""
`gradcheck` subcommand: compare analytic gradients with finite differences.
"""

import argparse

from app.commands.common import emit, load_params, resolve_config
from app.core.errors import NumericError
from app.services.gcn_service import init_params_from_config
from app.services.gradcheck_service import gradient_check, random_graph

FLAGS = {
    "layers": "train.layers",
    "d_e": "train.d_e",
    "hidden": "train.hidden",
    "focal_alpha": "train.focal_alpha",
    "focal_gamma": "train.focal_gamma",
    "k_prime": "graph.k_prime",
    "edge_input": "graph.edge_input",
}


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("gradcheck", parents=parents, help="finite-difference gradient check")
    parser.add_argument("--nodes", type=int, default=10, help="nodes of the random graph")
    parser.add_argument("--dim", type=int, default=8, help="feature dimension of the random graph")
    parser.add_argument("--layers", type=int)
    parser.add_argument("--d-e", dest="d_e", type=int)
    parser.add_argument("--hidden", type=int)
    parser.add_argument("--focal-alpha", dest="focal_alpha", type=float)
    parser.add_argument("--focal-gamma", dest="focal_gamma", type=float)
    parser.add_argument("--k-prime", dest="k_prime", type=int)
    parser.add_argument("--edge-input", dest="edge_input", choices=["nodes", "gallery"])
    parser.add_argument("--checkpoint", help="check at these parameters instead of a fresh init")
    parser.add_argument("--step", type=float, default=1e-5, help="finite-difference step")
    parser.add_argument("--tolerance", type=float, default=1e-4, help="relative error threshold")
    parser.add_argument("--corrupt", metavar="BLOCK", help="scale the analytic gradient of BLOCK (fault injection)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    """
    Print the per-block report; a failed check exits with the numeric error code.
    """

    cfg = resolve_config(args, FLAGS)
    params = load_params(args.checkpoint) if args.checkpoint else init_params_from_config(args.dim, cfg.train)
    graph = random_graph(args.nodes, params.dim, cfg.graph.k_prime, cfg.seed, cfg.graph.edge_input)
    report = gradient_check(params, graph, cfg.train, h=args.step, tolerance=args.tolerance, corrupt=args.corrupt)
    emit(report.model_dump())
    if not report.passed:
        failed = [b.name for b in report.blocks if not b.passed]
        raise NumericError(f"Gradient check failed for {', '.join(failed)}")
    return 0
