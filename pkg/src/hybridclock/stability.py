"""Allan variance of clock residuals and the rescaled stability units.

Rescaled units remove every absolute scale: ``t_tilde = gamma_lo * T`` and
``sigma2_tilde = sigma2 * omega0**2 * tau / gamma_lo``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STABILITY_HEADER = ["t_tilde", "inv_sigma2_tilde", "std_error", "n_traj", "n_cycles"]


@dataclass(frozen=True)
class StabilityPoint:
    """One point of a stability curve.

    ``std_error`` is the Monte Carlo standard error of ``sigma2_tilde``.
    """

    t_tilde: float
    sigma2_tilde: float
    std_error: float = 0.0
    n_trajectories: int = 1
    n_cycles: int = 0

    def __post_init__(self):
        if self.sigma2_tilde < 0 or self.std_error < 0:
            raise ValueError("sigma2_tilde and std_error must be non-negative")

    @property
    def inv_sigma2_tilde(self) -> float:
        return math.inf if self.sigma2_tilde == 0 else 1.0 / self.sigma2_tilde

    def csv_row(self) -> list:
        return [
            repr(float(self.t_tilde)),
            repr(float(self.inv_sigma2_tilde)),
            repr(float(self.std_error)),
            self.n_trajectories,
            self.n_cycles,
        ]


def fractional_errors(records, omega0: float, ramsey_time: float) -> np.ndarray:
    """Fractional frequency errors ``y_n = residual_n / (omega0 T)``.

    ``records`` is anything with a ``residual`` array, or the residuals themselves.
    """
    residual = getattr(records, "residual", records)
    residual = np.asarray(residual, dtype=float)
    if residual.size == 0:
        raise ValueError("no cycle records")
    return residual / (omega0 * ramsey_time)


def allan_variance(y: Sequence[float], cycles_per_block: int) -> float:
    """Non-overlapping two-sample Allan variance at ``tau = cycles_per_block * T``.

    ``y`` is split into consecutive blocks of ``cycles_per_block`` values
    (a trailing partial block is dropped) and half the mean squared
    difference of adjacent block means is returned.
    """
    y = np.asarray(y, dtype=float)
    m = int(cycles_per_block)
    if m < 1:
        raise ValueError("cycles_per_block must be >= 1")
    n_blocks = len(y) // m
    if n_blocks < 2:
        raise ValueError(f"need at least {2 * m} values for blocks of {m}, got {len(y)}")
    means = y[: n_blocks * m].reshape(n_blocks, m).mean(axis=1)
    return 0.5 * float(np.mean(np.diff(means) ** 2))


def rescale(sigma2: float, ramsey_time: float, omega0: float, gamma_lo: float, tau: float) -> StabilityPoint:
    if not (gamma_lo > 0 and ramsey_time > 0 and omega0 > 0 and tau > 0):
        raise ValueError("ramsey_time, omega0, gamma_lo and tau must all be positive")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    return StabilityPoint(t_tilde=gamma_lo * ramsey_time, sigma2_tilde=sigma2 * omega0**2 * tau / gamma_lo)


def unscale(point: StabilityPoint, omega0: float, gamma_lo: float, tau: float) -> float:
    """Inverse of ``rescale`` for the variance."""
    return point.sigma2_tilde * gamma_lo / (omega0**2 * tau)


def aggregate(values: Iterable[float], t_tilde: float, n_cycles: int) -> StabilityPoint:
    """Mean of per-trajectory ``sigma2_tilde`` values with its standard error."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ValueError("nothing to aggregate")
    err = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return StabilityPoint(t_tilde, float(v.mean()), err, int(v.size), int(n_cycles))


def trajectory_sigma2_tilde(records, t_tilde: float, cycles_per_block: int) -> float:
    """Rescaled Allan variance of one trajectory, in units where gamma_lo = omega0 = 1.

    With ``T = t_tilde`` and ``tau = cycles_per_block * T`` this is
    ``allan_variance(residual / T) * tau``.
    """
    y = fractional_errors(records, 1.0, t_tilde)
    sigma2 = allan_variance(y, cycles_per_block)
    return rescale(sigma2, t_tilde, 1.0, 1.0, cycles_per_block * t_tilde).sigma2_tilde


def write_stability_csv(path, points: Sequence[StabilityPoint]) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STABILITY_HEADER)
        for p in points:
            writer.writerow(p.csv_row())
