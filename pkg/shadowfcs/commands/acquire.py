"""`acquire`: simulate a randomized-measurement dataset from a state file."""

import argparse
import logging
from pathlib import Path

from shadowfcs import storage
from shadowfcs.commands import common_parser, console, load_run_config, require_out
from shadowfcs.errors import InputError
from shadowfcs.services.randmeas import acquire_dataset

logger = logging.getLogger(__name__)


def cmd_acquire(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    out = require_out(args)
    if args.experimental is not None:
        dataset = storage.import_experimental_dataset(args.experimental)
    elif args.state is None:
        raise InputError("acquire needs a state file or --experimental")
    else:
        state, metadata = storage.read_state(args.state)
        acquisition = config.acquisition
        dataset = acquire_dataset(
            state,
            acquisition.n_u,
            acquisition.n_m,
            acquisition.seed,
            state_descriptor=metadata.state_descriptor,
            time_ms=metadata.time_ms,
        )
    storage.write_dataset(out, dataset)
    console.print(
        f"{dataset.n_u} unitaries x {dataset.n_m} shots on {dataset.n_qubits} qubits -> {out}"
    )
    return 0


def register(subparsers, parents: list[argparse.ArgumentParser] | None = None) -> None:
    parser = subparsers.add_parser(
        "acquire",
        parents=parents or [common_parser()],
        help="Sample random local unitaries and shots from a state file",
    )
    parser.add_argument("state", type=Path, nargs="?", help="State file written by 'simulate'")
    parser.add_argument(
        "--experimental", type=Path, help="Raw experimental data to convert instead"
    )
    parser.set_defaults(handler=cmd_acquire)
