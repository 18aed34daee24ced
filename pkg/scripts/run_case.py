#!/usr/bin/env python3
"""
Standalone script that runs the full pipeline for one experimental preset and
reports how long every stage takes.

It chains the same subcommands a user would call by hand:
simulate -> acquire -> estimate (FCS and PDF on the preset subsystem).

Usage:
    python scripts/run_case.py <preset> [output_dir] [time_ms]

Examples:
    python scripts/run_case.py case-I
    python scripts/run_case.py case-II /tmp/case2 2.0

Outputs are saved to:
    - <output_dir>/state.json, <output_dir>/dataset.jsonl
    - <output_dir>/estimate_fcs_<axis>.csv, <output_dir>/estimate_pdf_<axis>.csv
"""

import sys
import time
from pathlib import Path

# Add project root to Python path so we can import from shadowfcs/
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from shadowfcs.main import main as shadowfcs_main


def run_stage(name: str, argv: list[str]) -> float:
    """Run one subcommand and return its wall time in seconds."""
    start = time.perf_counter()
    status = shadowfcs_main(argv)
    elapsed = time.perf_counter() - start
    if status != 0:
        print(f"Error: stage '{name}' exited with status {status}")
        sys.exit(status)
    print(f"   {name:10s} {elapsed:8.2f} s")
    return elapsed


def run_case(preset: str, output_dir: Path, time_ms: str) -> float:
    """Run simulate, acquire and estimate for ``preset``; returns the total time."""
    output_dir.mkdir(parents=True, exist_ok=True)
    state = output_dir / "state.json"
    dataset = output_dir / "dataset.jsonl"
    common = ["--preset", preset, "--log-level", "WARNING"]

    print(f"Running {preset} at t = {time_ms} ms into {output_dir}")
    total = 0.0
    total += run_stage("simulate", ["simulate", *common, "--time-ms", time_ms, "--out", str(state)])
    total += run_stage("acquire", ["acquire", str(state), *common, "--out", str(dataset)])
    total += run_stage(
        "estimate",
        [
            "estimate",
            str(dataset),
            *common,
            "--targets",
            "fcs,pdf",
            "--out",
            str(output_dir / "estimate"),
        ],
    )
    print(f"   {'total':10s} {total:8.2f} s")
    return total


def main():
    """Main entry point for the script."""
    if len(sys.argv) < 2 or len(sys.argv) > 4:
        print("Usage: python scripts/run_case.py <preset> [output_dir] [time_ms]")
        print()
        print("Presets: case-I (N=10 Neel), case-II (N=12 tilted ferromagnet)")
        sys.exit(1)

    preset = sys.argv[1]
    output_dir = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("outputs") / preset
    time_ms = sys.argv[3] if len(sys.argv) > 3 else "1.0"
    run_case(preset, output_dir, time_ms)


if __name__ == "__main__":
    main()
