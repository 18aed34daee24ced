"""Error bars over per-unitary estimates.

Inputs have the unitaries on the leading axis; complex inputs are reduced
separately for their real and imaginary parts.
"""

import numpy as np

from shadowfcs.errors import InputError


def stderr_of_mean(per_unitary: np.ndarray) -> np.ndarray:
    """Standard error of the mean over axis 0 (ddof=1); zero for a single unitary."""
    values = np.asarray(per_unitary, dtype=float)
    n = values.shape[0]
    if n < 1:
        raise InputError("Cannot compute an error bar from zero estimates")
    if n == 1:
        return np.zeros(values.shape[1:])
    return values.std(axis=0, ddof=1) / np.sqrt(n)


def jackknife_stderr(per_unitary: np.ndarray, n_blocks: int | None = None) -> np.ndarray:
    """Blocked leave-one-block-out jackknife error of the mean over axis 0.

    Args:
        per_unitary: Real estimates, unitaries on axis 0
        n_blocks: Number of contiguous blocks; defaults to one block per unitary

    Returns:
        sqrt((B - 1) / B * sum_b (theta_b - theta_bar)^2)
    """
    values = np.asarray(per_unitary, dtype=float)
    n = values.shape[0]
    blocks = n if n_blocks is None else n_blocks
    if blocks < 2:
        raise InputError(f"Jackknife needs at least 2 blocks, got {blocks}")
    if blocks > n:
        raise InputError(f"Cannot split {n} unitaries into {blocks} blocks")

    total = values.sum(axis=0)
    leave_out = np.stack(
        [(total - chunk.sum(axis=0)) / (n - len(chunk)) for chunk in np.array_split(values, blocks)]
    )
    spread = leave_out - leave_out.mean(axis=0)
    return np.sqrt((blocks - 1) / blocks * np.sum(spread**2, axis=0))


def error_bars(
    per_unitary: np.ndarray, method: str = "stderr", n_blocks: int | None = None
) -> np.ndarray:
    """Error bars of the mean with the configured method."""
    if method == "stderr":
        return stderr_of_mean(per_unitary)
    if method == "jackknife":
        return jackknife_stderr(per_unitary, n_blocks)
    raise InputError(f"Unknown error method '{method}'; use 'stderr' or 'jackknife'")


def complex_error_bars(
    per_unitary: np.ndarray, method: str = "stderr", n_blocks: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(per_unitary)
    return (
        error_bars(values.real, method, n_blocks),
        error_bars(values.imag, method, n_blocks),
    )
