"""`oracle` and `compare`: exact values and their z-scores against estimates."""

import argparse
import logging
import math
from pathlib import Path

import numpy as np
from rich.table import Table

from shadowfcs import storage
from shadowfcs.commands import common_parser, console, load_run_config, prefixed, require_out
from shadowfcs.commands.estimate import alpha_grid_for
from shadowfcs.errors import InputError
from shadowfcs.models.schemas import Axis, ClosedFormSpec, RunConfig, SubsystemSpec
from shadowfcs.services.oracle import closed_form, closed_form_pdf, exact_fcs_curve, exact_pdf
from shadowfcs.services.shadows import bulk_windows
from shadowfcs.services.spincore import DensityMatrix, StateVector, partial_trace

logger = logging.getLogger(__name__)

GRID_TOL = 1e-12
EXACT_MATCH_TOL = 1e-12


# ============================================================================
# Exact sources
# ============================================================================


def _family_axis(family: str) -> Axis:
    return Axis.X if family.endswith("_x") else Axis.Z


def _family_kind(family: str) -> str:
    if family == "parity":
        return "parity"
    return "fcs" if "_fcs_" in family else "pdf"


def _closed_form_spec(
    config: RunConfig, family: str, window: SubsystemSpec, axis: Axis | None = None
) -> ClosedFormSpec:
    initial = config.initial_state
    rates = initial.bitflip_rates
    return ClosedFormSpec(
        family=family,
        n_a=window.size,
        theta=initial.theta,
        rates=[rates[site - 1] for site in window.sites] if rates else None,
        first_site=window.sites[0],
        state="neel" if initial.kind == "neel" else "tilted",
        axis=axis,
    )


class ExactSource:
    """Exact FCS/PDF on a list of windows from a state file or a closed form."""

    def __init__(
        self,
        config: RunConfig,
        state: StateVector | DensityMatrix | None = None,
        family: str | None = None,
    ):
        if (state is None) == (family is None):
            raise InputError("Give exactly one exact source: --state or --family")
        self.config = config
        self.state = state
        self.family = family

    @classmethod
    def from_paths(
        cls, config: RunConfig, state_path: Path | None, family: str | None
    ) -> "ExactSource":
        state = storage.read_state(state_path)[0] if state_path is not None else None
        return cls(config, state, family)

    def _check_family(self, axis: Axis, kind: str) -> None:
        if self.family is None:
            return
        if _family_kind(self.family) != kind or _family_axis(self.family) != axis:
            raise InputError(
                f"Family '{self.family}' does not describe the {kind} along {axis.value}"
            )

    def fcs(self, windows: list[SubsystemSpec], axis: Axis, grid) -> np.ndarray:
        self._check_family(axis, "fcs")
        curves = [
            closed_form(_closed_form_spec(self.config, self.family, window), grid)
            if self.family
            else exact_fcs_curve(partial_trace(self.state, window), axis, grid)
            for window in windows
        ]
        return np.mean(curves, axis=0)

    def pdf(self, windows: list[SubsystemSpec], axis: Axis) -> np.ndarray:
        self._check_family(axis, "pdf")
        distributions = [
            closed_form_pdf(_closed_form_spec(self.config, self.family, window)).probabilities
            if self.family
            else exact_pdf(partial_trace(self.state, window), axis).probabilities
            for window in windows
        ]
        return np.mean(distributions, axis=0)

    def parity(self, windows: list[SubsystemSpec], axis: Axis) -> float:
        """Window-averaged expectation of the parity string along axis."""
        if self.family != "parity":
            raise InputError("Parity values come from the 'parity' family only")
        specs = [_closed_form_spec(self.config, self.family, window, axis) for window in windows]
        return float(np.mean([closed_form(spec) for spec in specs]))


def analysis_windows(config: RunConfig, n_qubits: int | None) -> list[SubsystemSpec]:
    analysis = config.analysis
    if analysis.bulk_average:
        return bulk_windows(
            n_qubits or config.quench.n_qubits, analysis.subsystem_spec.size, analysis.bulk_edge
        )
    return [analysis.subsystem_spec]


# ============================================================================
# Commands
# ============================================================================


def cmd_oracle(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    prefix = require_out(args)
    source = ExactSource.from_paths(config, args.state, args.family)
    n_qubits = source.state.n_qubits if source.state is not None else None
    windows = analysis_windows(config, n_qubits)
    grid = alpha_grid_for(config.analysis)
    metadata = {
        "config": config.model_dump(mode="json"),
        "seed": config.acquisition.seed,
        "source": str(args.state or args.family),
        "windows": [str(window) for window in windows],
    }

    if args.family == "parity":
        rows = [[axis.value, source.parity(windows, axis)] for axis in config.analysis.axes]
        storage.write_table(prefixed(prefix, "oracle", "parity"), "oracle_parity", rows, metadata)
        console.print(f"Wrote the parity table with prefix {prefix}")
        return 0
    if args.family:
        jobs = [(_family_axis(args.family), _family_kind(args.family))]
    else:
        jobs = [
            (axis, kind)
            for axis in config.analysis.axes
            for kind in ("fcs", "pdf")
            if kind in config.analysis.targets
        ]
    for axis, kind in jobs:
        if kind == "fcs":
            values = source.fcs(windows, axis, grid)
            rows = [[a, v.real, v.imag] for a, v in zip(grid, values)]
        else:
            values = source.pdf(windows, axis)
            rows = [[q, p] for q, p in zip(range(-windows[0].size, windows[0].size + 1, 2), values)]
        storage.write_table(
            prefixed(prefix, "oracle", kind, axis.value),
            f"oracle_{kind}",
            rows,
            dict(metadata, axis=axis.value),
        )
    console.print(f"Wrote {len(jobs)} oracle table(s) with prefix {prefix}")
    return 0


def z_scores(estimate: np.ndarray, exact: np.ndarray, stderr: np.ndarray) -> np.ndarray:
    """(estimate - exact) / stderr; a zero error bar gives 0 on exact agreement, else inf."""
    diff = np.asarray(estimate, dtype=float) - np.asarray(exact, dtype=float)
    stderr = np.asarray(stderr, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / stderr
    zero = stderr == 0
    z[zero] = np.where(np.abs(diff[zero]) <= EXACT_MATCH_TOL, 0.0, math.inf)
    return z


def _reference_values(path: Path, kind: str, keys: np.ndarray) -> tuple[np.ndarray, ...]:
    reference = storage.read_table(path)
    if reference.kind != f"oracle_{kind}":
        raise InputError(f"{path} is a '{reference.kind}' table, expected 'oracle_{kind}'")
    key = "alpha" if kind == "fcs" else "q"
    found = reference.column(key)
    if found.shape != keys.shape or np.max(np.abs(found - keys), initial=0.0) > GRID_TOL:
        raise InputError(
            f"Grid mismatch: estimate has {keys.size} {key} points, {path} has {found.size} "
            "on a different grid"
        )
    if kind == "fcs":
        return reference.column("exact_re"), reference.column("exact_im")
    return (reference.column("exact"),)


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    out = require_out(args)
    estimate = storage.read_table(args.estimate)
    kind = estimate.kind
    if kind not in ("fcs", "pdf"):
        raise InputError(f"Can only compare fcs or pdf tables, got '{kind}'")
    axis = Axis(estimate.metadata["axis"])
    windows = [SubsystemSpec.parse(w) for w in estimate.metadata.get("windows") or []] or [
        SubsystemSpec.parse(estimate.metadata["subsystem"])
    ]

    if kind == "fcs":
        grid = estimate.column("alpha")
        if args.reference is not None:
            exact_re, exact_im = _reference_values(args.reference, "fcs", grid)
        else:
            exact = ExactSource.from_paths(config, args.state, args.family).fcs(windows, axis, grid)
            exact_re, exact_im = exact.real, exact.imag
        z_re = z_scores(estimate.column("re"), exact_re, estimate.column("stderr_re"))
        z_im = z_scores(estimate.column("im"), exact_im, estimate.column("stderr_im"))
        rows = [
            list(row)
            for row in zip(
                grid, estimate.column("re"), estimate.column("im"), exact_re, exact_im, z_re, z_im
            )
        ]
        max_z = float(np.max(np.abs(np.concatenate([z_re, z_im]))))
    else:
        q = estimate.column("q")
        if args.reference is not None:
            (exact,) = _reference_values(args.reference, "pdf", q)
        else:
            exact = ExactSource.from_paths(config, args.state, args.family).pdf(windows, axis)
            if exact.size != q.size:
                raise InputError(f"Estimate has {q.size} outcomes, exact PDF has {exact.size}")
        z = z_scores(estimate.column("p"), exact, estimate.column("stderr"))
        rows = [[int(k), p, e, zk] for k, p, e, zk in zip(q, estimate.column("p"), exact, z)]
        max_z = float(np.max(np.abs(z)))

    storage.write_table(
        out,
        f"compare_{kind}",
        rows,
        {
            "config": config.model_dump(mode="json"),
            "seed": estimate.metadata.get("seed"),
            "estimate": str(args.estimate),
            "source": str(args.reference or args.state or args.family),
            "axis": axis.value,
            "windows": [str(w) for w in windows],
            "max_abs_z": max_z,
        },
    )
    summary = Table(title=f"{kind.upper()} along {axis.value} vs exact")
    summary.add_column("Points", justify="right")
    summary.add_column("max |z|", justify="right", style="cyan")
    summary.add_row(str(len(rows)), f"{max_z:.3f}")
    console.print(summary)
    return 0


def register(subparsers, parents: list[argparse.ArgumentParser] | None = None) -> None:
    parents = parents or [common_parser()]
    oracle = subparsers.add_parser(
        "oracle", parents=parents, help="Tabulate exact FCS/PDF from a state or a closed form"
    )
    oracle.add_argument("--state", type=Path, help="State file written by 'simulate'")
    oracle.add_argument("--family", help="Closed-form family, e.g. neel_bitflip_fcs_z")
    oracle.set_defaults(handler=cmd_oracle)

    compare = subparsers.add_parser(
        "compare", parents=parents, help="z-scores of an estimate table against exact values"
    )
    compare.add_argument("estimate", type=Path, help="fcs or pdf table written by 'estimate'")
    compare.add_argument("--state", type=Path, help="State file to take exact values from")
    compare.add_argument("--family", help="Closed-form family to take exact values from")
    compare.add_argument("--reference", type=Path, help="Table written by 'oracle'")
    compare.set_defaults(handler=cmd_compare)
