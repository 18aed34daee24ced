"""Subcommands and the configuration flags they share.

Configuration precedence: preset < --config JSON file < individual flags.
"""

import argparse
import json
import logging
from pathlib import Path
from typing import Any

from rich.console import Console

from shadowfcs.errors import InputError
from shadowfcs.models.schemas import RunConfig
from shadowfcs.services.dynamics import LEARNED_NEEL_RATES

logger = logging.getLogger(__name__)

console = Console()


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _text_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _rates(text: str) -> list[float]:
    if text.strip().lower() == "learned":
        return list(LEARNED_NEEL_RATES)
    return _float_list(text)


# flag dest -> (config section, key)
_OVERRIDES = {
    "n_qubits": ("quench", "n_qubits"),
    "j0": ("quench", "j0"),
    "alpha_exp": ("quench", "alpha_exp"),
    "time_ms": ("quench", "times_ms"),
    "state_kind": ("initial_state", "kind"),
    "theta": ("initial_state", "theta"),
    "bitflip_rates": ("initial_state", "bitflip_rates"),
    "seed": ("acquisition", "seed"),
    "n_u": ("acquisition", "n_u"),
    "n_m": ("acquisition", "n_m"),
    "subsystem": ("analysis", "subsystem"),
    "axes": ("analysis", "axes"),
    "alpha_points": ("analysis", "alpha_points"),
    "alpha_max": ("analysis", "alpha_max"),
    "bulk_average": ("analysis", "bulk_average"),
    "bulk_edge": ("analysis", "bulk_edge"),
    "error_method": ("analysis", "error_method"),
    "jackknife_blocks": ("analysis", "jackknife_blocks"),
    "targets": ("analysis", "targets"),
    "sweep_alphas": ("analysis", "sweep_alphas"),
    "dephasing_rate": ("noise", "dephasing_rate"),
    "trotter_step_ms": ("noise", "trotter_step_ms"),
}


def common_parser() -> argparse.ArgumentParser:
    """Parent parser with the flags every subcommand accepts."""
    parser = argparse.ArgumentParser(add_help=False)
    general = parser.add_argument_group("general")
    general.add_argument("--config", type=Path, help="JSON file with a RunConfig")
    general.add_argument("--preset", help="Parameter preset: case-I or case-II")
    general.add_argument("--seed", type=int, help="Master seed of the acquisition")
    general.add_argument("--out", type=Path, help="Output file or prefix")
    general.add_argument("--threads", type=int, help="Worker threads (default: SHADOWFCS_THREADS)")
    general.add_argument("--log-level", help="Logging level (default: SHADOWFCS_LOG_LEVEL or INFO)")

    quench = parser.add_argument_group("quench")
    quench.add_argument("--n-qubits", type=int)
    quench.add_argument("--j0", type=float, help="Coupling J0 in rad/s")
    quench.add_argument("--alpha-exp", type=float, help="Power-law exponent")
    quench.add_argument(
        "--time-ms", type=_float_list, help="Evolution time(s) in ms, comma-separated"
    )
    quench.add_argument("--state-kind", choices=["neel", "tilted_ferromagnet"])
    quench.add_argument("--theta", help="Tilt angle, radians or e.g. 0.5pi")
    quench.add_argument(
        "--bitflip-rates", type=_rates, help="Comma-separated rates, or 'learned'"
    )
    quench.add_argument("--dephasing-rate", type=float, help="Per-site dephasing rate in 1/s")
    quench.add_argument("--trotter-step-ms", type=float)

    acquisition = parser.add_argument_group("acquisition")
    acquisition.add_argument("--n-u", type=int, help="Number of random unitaries")
    acquisition.add_argument("--n-m", type=int, help="Shots per unitary")

    analysis = parser.add_argument_group("analysis")
    analysis.add_argument("--subsystem", help="Sites of A: 'a:b' or 'a,b,c' (1-based)")
    analysis.add_argument("--axes", type=_text_list, help="Spin axes, e.g. 'x,z'")
    analysis.add_argument("--alpha-points", type=int)
    analysis.add_argument("--alpha-max", help="Upper end of the alpha grid, e.g. 'pi'")
    analysis.add_argument(
        "--bulk-average", action=argparse.BooleanOptionalAction, default=None
    )
    analysis.add_argument("--bulk-edge", type=int, help="Sites excluded at each chain end")
    analysis.add_argument("--error-method", choices=["stderr", "jackknife"])
    analysis.add_argument("--jackknife-blocks", type=int)
    analysis.add_argument("--targets", type=_text_list, help="fcs,pdf,moments,propagated")
    analysis.add_argument("--sweep-alphas", type=_text_list, help="Alphas tabulated by sweep")
    return parser


def _merge(base: dict, update: dict) -> dict:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Resolve the RunConfig of a command.

    Raises:
        pydantic.ValidationError: If the merged configuration is invalid
        OSError: If the config file cannot be read
    """
    preset = getattr(args, "preset", None)
    config = RunConfig.preset(preset) if preset else RunConfig()
    data: dict[str, Any] = config.model_dump(mode="json")

    config_path = getattr(args, "config", None)
    if config_path is not None:
        with open(config_path, encoding="utf-8") as stream:
            data = _merge(data, json.load(stream))

    for dest, (section, key) in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            data[section][key] = value
    return RunConfig.model_validate(data)


def require_out(args: argparse.Namespace) -> Path:
    if args.out is None:
        raise InputError(f"'{args.command}' needs --out")
    return args.out


def prefixed(prefix: Path, *parts: str) -> Path:
    """prefix_part1_part2.csv next to the prefix."""
    return prefix.with_name("_".join((prefix.name,) + parts) + ".csv")