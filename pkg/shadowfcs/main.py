import argparse
import logging
import os
import sys

from dotenv import load_dotenv
from rich.logging import RichHandler

from shadowfcs import __version__
from shadowfcs.commands import acquire, common_parser, estimate, hist, oracle, simulate, sweep
from shadowfcs.workers import close_pool, set_thread_count

LOG_LEVEL_ENV = "SHADOWFCS_LOG_LEVEL"

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadowfcs",
        description="Full counting statistics from randomized measurements on spin chains",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    parents = [common_parser()]
    for module in (simulate, acquire, estimate, oracle, hist, sweep):
        module.register(subparsers, parents)
    return parser


def configure_logging(level: str | None) -> None:
    level = (level or os.getenv(LOG_LEVEL_ENV) or "INFO").upper()
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(show_path=False)],
    )


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand; returns the exit status."""
    # Load environment variables from .env file
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        configure_logging(args.log_level)
        set_thread_count(args.threads)
        return args.handler(args)
    except (ValueError, OSError, NotImplementedError) as e:
        # pydantic.ValidationError is a ValueError
        logger.error(f"{args.command} failed: {e}")
        return 1
    finally:
        close_pool()


if __name__ == "__main__":
    sys.exit(main())
