"""`sweep`: simulate, acquire and estimate at every configured time.

Time index k acquires with seed SeedSequence([seed, k]).generate_state(1)[0],
so every point of a sweep is reproducible on its own.
"""

import argparse
import logging

import numpy as np
from rich.progress import Progress

from shadowfcs import storage
from shadowfcs.commands import common_parser, console, load_run_config, require_out
from shadowfcs.commands.estimate import fcs_for, pdf_for
from shadowfcs.commands.oracle import ExactSource, analysis_windows
from shadowfcs.commands.simulate import simulate_state
from shadowfcs.models.schemas import RunConfig
from shadowfcs.services.dynamics import build_xy_hamiltonian
from shadowfcs.services.oracle import exact_moments
from shadowfcs.services.randmeas import acquire_dataset
from shadowfcs.services.shadows import estimate_magnetization_moments
from shadowfcs.services.spincore import partial_trace

logger = logging.getLogger(__name__)


def time_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def sweep_rows(config: RunConfig, t_ms: float, index: int, hamiltonian) -> list[list]:
    """Long-format rows of one time point."""
    analysis = config.analysis
    acquisition = config.acquisition
    state = simulate_state(config, t_ms, hamiltonian)
    dataset = acquire_dataset(
        state,
        acquisition.n_u,
        acquisition.n_m,
        time_seed(acquisition.seed, index),
        state_descriptor=config.initial_state.describe(),
        time_ms=t_ms,
    )
    exact = ExactSource(config, state=state)
    windows = analysis_windows(config, config.quench.n_qubits)
    alphas = np.unique(analysis.sweep_alphas)

    rows = []
    for axis in analysis.axes:
        if "fcs" in analysis.targets:
            curve = fcs_for(dataset, analysis, axis, alphas)
            reference = exact.fcs(windows, axis, alphas)
            for alpha, value, err_re, err_im, ref in zip(
                alphas, curve.values, curve.stderr_re, curve.stderr_im, reference
            ):
                rows.append(
                    [
                        t_ms, axis.value, "fcs", alpha,
                        value.real, value.imag, err_re, err_im, ref.real, ref.imag,
                    ]
                )
        if "pdf" in analysis.targets:
            pdf = pdf_for(dataset, analysis, axis)
            reference = exact.pdf(windows, axis)
            for q, p, err, ref in zip(pdf.outcomes, pdf.probabilities, pdf.stderr, reference):
                rows.append([t_ms, axis.value, "pdf", int(q), p, 0.0, err, 0.0, ref, 0.0])
        if "moments" in analysis.targets:
            moments = estimate_magnetization_moments(
                dataset,
                analysis.subsystem_spec,
                axis,
                error_method=analysis.error_method,
                jackknife_blocks=analysis.jackknife_blocks,
            )
            mean, second = exact_moments(partial_trace(state, analysis.subsystem_spec), axis)
            rows.append(
                [
                    t_ms, axis.value, "mean", "",
                    moments.mean, 0.0, moments.mean_stderr, 0.0, mean, 0.0,
                ]
            )
            rows.append(
                [
                    t_ms, axis.value, "second", "",
                    moments.second, 0.0, moments.second_stderr, 0.0, second, 0.0,
                ]
            )
    return rows


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    out = require_out(args)
    times = config.quench.times_ms
    hamiltonian = build_xy_hamiltonian(config.quench)

    rows = []
    with Progress(console=console, transient=True) as progress:
        task = progress.add_task("Sweeping times", total=len(times))
        for index, t_ms in enumerate(times):
            rows.extend(sweep_rows(config, t_ms, index, hamiltonian))
            logger.info(f"Finished t = {t_ms} ms ({index + 1}/{len(times)})")
            progress.advance(task)

    storage.write_table(
        out,
        "sweep",
        rows,
        {
            "config": config.model_dump(mode="json"),
            "seed": config.acquisition.seed,
            "time_seeds": [time_seed(config.acquisition.seed, k) for k in range(len(times))],
        },
    )
    console.print(f"Sweep over {len(times)} times -> {out}")
    return 0


def register(subparsers, parents: list[argparse.ArgumentParser] | None = None) -> None:
    parser = subparsers.add_parser(
        "sweep",
        parents=parents or [common_parser()],
        help="Run simulate, acquire, estimate and the exact oracle over all times",
    )
    parser.set_defaults(handler=cmd_sweep)
