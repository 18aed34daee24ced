"""`estimate`: FCS, PDF, moment and error-propagation tables from a dataset."""

import argparse
import logging
import math
from pathlib import Path

from rich.table import Table

from shadowfcs import storage
from shadowfcs.commands import common_parser, console, load_run_config, prefixed, require_out
from shadowfcs.errors import InputError
from shadowfcs.models.schemas import AnalysisConfig, Axis, RunConfig
from shadowfcs.services.randmeas import RandomizedDataset
from shadowfcs.services.shadows import (
    FCSCurve,
    MagnetizationMoments,
    PDFEstimate,
    average_bulk_subsystems,
    cumulants_from_fcs,
    default_alpha_grid,
    estimate_fcs,
    estimate_magnetization_moments,
    estimate_pdf,
    expand_fcs_terms,
    fcs_from_terms,
    propagate_fcs_error,
)

logger = logging.getLogger(__name__)


def alpha_grid_for(analysis: AnalysisConfig):
    return default_alpha_grid(
        analysis.subsystem_spec.size, analysis.alpha_points, analysis.alpha_max
    )


def fcs_for(
    dataset: RandomizedDataset, analysis: AnalysisConfig, axis: Axis, alpha_grid
) -> FCSCurve:
    """FCS on the configured subsystem, or averaged over bulk windows of its size."""
    options = {"error_method": analysis.error_method, "jackknife_blocks": analysis.jackknife_blocks}
    if analysis.bulk_average:
        return average_bulk_subsystems(
            dataset,
            analysis.subsystem_spec.size,
            axis,
            "fcs",
            alpha_grid,
            edge=analysis.bulk_edge,
            **options,
        )
    return estimate_fcs(dataset, analysis.subsystem_spec, axis, alpha_grid, **options)


def pdf_for(dataset: RandomizedDataset, analysis: AnalysisConfig, axis: Axis) -> PDFEstimate:
    options = {"error_method": analysis.error_method, "jackknife_blocks": analysis.jackknife_blocks}
    if analysis.bulk_average:
        return average_bulk_subsystems(
            dataset, analysis.subsystem_spec.size, axis, "pdf", edge=analysis.bulk_edge, **options
        )
    return estimate_pdf(dataset, analysis.subsystem_spec, axis, **options)


def moments_for(
    dataset: RandomizedDataset, analysis: AnalysisConfig, axis: Axis
) -> MagnetizationMoments:
    options = {"error_method": analysis.error_method, "jackknife_blocks": analysis.jackknife_blocks}
    if analysis.bulk_average:
        return average_bulk_subsystems(
            dataset,
            analysis.subsystem_spec.size,
            axis,
            "moments",
            edge=analysis.bulk_edge,
            **options,
        )
    return estimate_magnetization_moments(dataset, analysis.subsystem_spec, axis, **options)


def fcs_rows(curve: FCSCurve) -> list[list]:
    return [
        [alpha, value.real, value.imag, err_re, err_im]
        for alpha, value, err_re, err_im in zip(
            curve.alpha_grid, curve.values, curve.stderr_re, curve.stderr_im
        )
    ]


def pdf_rows(pdf: PDFEstimate) -> list[list]:
    return [[q, p, err] for q, p, err in zip(pdf.outcomes, pdf.probabilities, pdf.stderr)]


def table_metadata(config: RunConfig, dataset: RandomizedDataset, source, **extra) -> dict:
    metadata = {
        "config": config.model_dump(mode="json"),
        "seed": dataset.metadata.seed,
        "dataset": dataset.metadata.model_dump(mode="json", by_alias=True),
        "source": str(source),
    }
    metadata.update(extra)
    return metadata


def _estimate_metadata(curve_or_pdf, analysis: AnalysisConfig) -> dict:
    return {
        "axis": curve_or_pdf.axis.value,
        "subsystem": str(curve_or_pdf.subsystem),
        "windows": [str(window) for window in curve_or_pdf.windows],
        "error_method": analysis.error_method,
        "n_unitaries": curve_or_pdf.n_unitaries,
    }


def _moments_row(dataset, analysis: AnalysisConfig, axis: Axis, curve: FCSCurve) -> list:
    """Moments and log-FCS cumulants on the windows the FCS curve was estimated on."""
    moments = moments_for(dataset, analysis, axis)
    try:
        log_mean, log_variance = cumulants_from_fcs(curve)
    except InputError as e:
        logger.warning(f"No log-FCS cumulants along {axis.value}: {e}")
        log_mean = log_variance = math.nan
    return [
        axis.value,
        moments.mean,
        moments.mean_stderr,
        moments.second,
        moments.second_stderr,
        log_mean,
        log_variance,
    ]


def cmd_estimate(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    prefix = require_out(args)
    dataset = storage.read_dataset(args.dataset)
    analysis = config.analysis
    subsystem = analysis.subsystem_spec
    subsystem.check_within(dataset.n_qubits)
    grid = alpha_grid_for(analysis)

    summary = Table(title=f"Estimates from {args.dataset}")
    summary.add_column("Axis", style="cyan")
    summary.add_column("Table")
    summary.add_column("File", style="dim")

    moments_rows, moments_windows = [], []
    for axis in analysis.axes:
        curve = None
        if {"fcs", "moments"} & set(analysis.targets):
            curve = fcs_for(dataset, analysis, axis, grid)
        if "fcs" in analysis.targets:
            path = storage.write_table(
                prefixed(prefix, "fcs", axis.value),
                "fcs",
                fcs_rows(curve),
                table_metadata(
                    config, dataset, args.dataset, **_estimate_metadata(curve, analysis)
                ),
            )
            summary.add_row(axis.value, "fcs", str(path))
        if "pdf" in analysis.targets:
            pdf = pdf_for(dataset, analysis, axis)
            path = storage.write_table(
                prefixed(prefix, "pdf", axis.value),
                "pdf",
                pdf_rows(pdf),
                table_metadata(config, dataset, args.dataset, **_estimate_metadata(pdf, analysis)),
            )
            summary.add_row(axis.value, "pdf", str(path))
        if "propagated" in analysis.targets:
            terms = expand_fcs_terms(
                dataset,
                subsystem,
                axis,
                error_method=analysis.error_method,
                jackknife_blocks=analysis.jackknife_blocks,
            )
            values = fcs_from_terms(terms, axis, grid)
            err_re, err_im = propagate_fcs_error(terms, axis, grid)
            rows = [
                [alpha, value.real, value.imag, er, ei]
                for alpha, value, er, ei in zip(grid, values, err_re, err_im)
            ]
            path = storage.write_table(
                prefixed(prefix, "propagated", axis.value),
                "propagated",
                rows,
                table_metadata(
                    config, dataset, args.dataset, axis=axis.value, subsystem=str(subsystem)
                ),
            )
            summary.add_row(axis.value, "propagated", str(path))
        if "moments" in analysis.targets:
            moments_rows.append(_moments_row(dataset, analysis, axis, curve))
            moments_windows = [str(window) for window in curve.windows]

    if moments_rows:
        path = storage.write_table(
            prefixed(prefix, "moments"),
            "moments",
            moments_rows,
            table_metadata(
                config,
                dataset,
                args.dataset,
                subsystem=str(subsystem),
                windows=moments_windows,
            ),
        )
        summary.add_row(",".join(row[0] for row in moments_rows), "moments", str(path))

    console.print(summary)
    return 0


def register(subparsers, parents: list[argparse.ArgumentParser] | None = None) -> None:
    parser = subparsers.add_parser(
        "estimate",
        parents=parents or [common_parser()],
        help="Estimate FCS/PDF/moment tables from a dataset",
    )
    parser.add_argument("dataset", type=Path, help="Dataset file written by 'acquire'")
    parser.set_defaults(handler=cmd_estimate)
