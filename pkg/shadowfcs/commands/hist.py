"""`hist`: uniformity histogram of the random unitaries in a dataset."""

import argparse
import logging
from pathlib import Path

from rich.table import Table

from shadowfcs import storage
from shadowfcs.commands import common_parser, console, load_run_config, require_out
from shadowfcs.services.randmeas import uniformity_histogram

logger = logging.getLogger(__name__)

FLATNESS_LEVEL = 1e-3


def cmd_hist(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    out = require_out(args)
    dataset = storage.read_dataset(args.dataset)
    histogram = uniformity_histogram(dataset)
    p_value = histogram.flatness_pvalue()

    rows = [
        [m, histogram.pooled[m], *histogram.per_site[:, m]] for m in histogram.m_values
    ]
    columns = storage.TABLE_COLUMNS["hist"] + [f"site_{j}" for j in range(1, dataset.n_qubits + 1)]
    storage.write_table(
        out,
        "hist",
        rows,
        {
            "config": config.model_dump(mode="json"),
            "seed": dataset.metadata.seed,
            "source": str(args.dataset),
            "dataset": dataset.metadata.model_dump(mode="json", by_alias=True),
            "flatness_pvalue": p_value,
        },
        columns=columns,
    )

    summary = Table(title=f"Uniformity of {dataset.n_u} unitaries over N_M = {dataset.n_m}")
    summary.add_column("chi-square p-value", justify="right", style="cyan")
    summary.add_column("Flat at 1e-3", justify="center")
    flat = p_value >= FLATNESS_LEVEL
    summary.add_row(f"{p_value:.4g}", "[green]yes[/green]" if flat else "[red]no[/red]")
    console.print(summary)
    if not flat:
        logger.warning(f"Pooled histogram is not flat (p = {p_value:.3g})")
    return 0


def register(subparsers, parents: list[argparse.ArgumentParser] | None = None) -> None:
    parser = subparsers.add_parser(
        "hist",
        parents=parents or [common_parser()],
        help="Histogram of up counts per unitary, with a flatness test",
    )
    parser.add_argument("dataset", type=Path, help="Dataset file written by 'acquire'")
    parser.set_defaults(handler=cmd_hist)
