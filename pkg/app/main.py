"""
Graph re-ranking toolkit: command-line entry point.

This module builds the `graph-rerank` command and registers every
subcommand (synth, train, eval, rank, gradcheck, inspect). Each
subcommand lives in its own module under `app.commands` and only parses
flags and prints results; the work is done by `app.services`.

Errors raised by the services are reported on stderr and mapped to the
process exit code: 2 for configuration errors, 3 for invalid data and
4 for numeric failures.
"""

import argparse
import logging
import sys
from typing import List, Optional

from app.commands import eval_command, gradcheck_command, inspect_command, rank_command, synth_command, train_command
from app.core.errors import GraphRerankError
from app.core.logging_config import configure_logging

logger = logging.getLogger("app.main")

# ------------------------------------------------------------------------------
# Parser
# ------------------------------------------------------------------------------

def common_options() -> argparse.ArgumentParser:
    """Options accepted by every subcommand."""

    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="JSON run config; flags override its values")
    parent.add_argument("--seed", type=int, help="single seed all randomness derives from")
    parent.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    parent.add_argument("--workers", type=int, help="threads for per-probe evaluation")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graph-rerank",
        description="Graph-based re-ranking of retrieval embeddings",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    parents = [common_options()]

    # ------------------------------------------------------------------------------
    # Subcommand registration
    # ------------------------------------------------------------------------------

    synth_command.register(subparsers, parents)
    train_command.register(subparsers, parents)
    eval_command.register(subparsers, parents)
    rank_command.register(subparsers, parents)
    gradcheck_command.register(subparsers, parents)
    inspect_command.register(subparsers, parents)
    return parser

# ------------------------------------------------------------------------------
# Entry point
# ------------------------------------------------------------------------------

def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Args:
        argv (list[str], optional): Arguments without the program name;
            defaults to `sys.argv[1:]`.

    Returns:
        int: Process exit code.
    """

    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level)
        return args.handler(args)
    except GraphRerankError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.detail)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
