"""`simulate`: prepare the initial state and evolve it under the XY quench."""

import argparse
import logging

from shadowfcs import storage
from shadowfcs.commands import common_parser, console, load_run_config, require_out
from shadowfcs.errors import InputError
from shadowfcs.models.schemas import RunConfig
from shadowfcs.services.dynamics import (
    build_xy_hamiltonian,
    evolve,
    evolve_density,
    prepare_initial_state,
)
from shadowfcs.services.spincore import DensityMatrix, StateVector, full_density_matrix, purity

logger = logging.getLogger(__name__)


def simulate_state(
    config: RunConfig, t_ms: float, hamiltonian=None
) -> StateVector | DensityMatrix:
    """State of the chain ``t_ms`` after the quench.

    A density matrix is returned as soon as bit-flip rates or dephasing are
    configured; otherwise the evolution stays pure.
    """
    h = hamiltonian or build_xy_hamiltonian(config.quench)
    state = prepare_initial_state(config.initial_state, config.quench.n_qubits)
    if config.noise.dephasing_rate > 0 and isinstance(state, StateVector):
        state = full_density_matrix(state)
    if isinstance(state, DensityMatrix):
        return evolve_density(
            state,
            h,
            t_ms,
            dephasing_rate=config.noise.dephasing_rate,
            step_ms=config.noise.trotter_step_ms,
        )
    return evolve(state, h, t_ms)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    out = require_out(args)
    times = config.quench.times_ms
    if len(times) != 1:
        raise InputError(f"simulate takes a single --time-ms, got {times}; use 'sweep' for series")

    state = simulate_state(config, times[0])
    storage.write_state(
        out,
        state,
        time_ms=times[0],
        state_descriptor=config.initial_state.describe(),
        config=config.model_dump(mode="json"),
    )
    if isinstance(state, DensityMatrix):
        console.print(f"Mixed state at t = {times[0]} ms, purity {purity(state):.6f} -> {out}")
    else:
        console.print(f"Pure state at t = {times[0]} ms -> {out}")
    return 0


def register(subparsers, parents: list[argparse.ArgumentParser] | None = None) -> None:
    parser = subparsers.add_parser(
        "simulate",
        parents=parents or [common_parser()],
        help="Evolve the initial state and write a state file",
    )
    parser.set_defaults(handler=cmd_simulate)
