"""Phase estimators for a single readout and for a feedback cascade."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class StageEstimate:
    stage_index: int
    outcome_mu: float
    theta_est: float


def arcsine_estimate(mu, jx_mean: float):
    """``arcsin(mu / <Jx>)`` with the ratio clamped to [-1, 1].

    Outcomes beyond the mean spin length (quantum fluctuations, or a phase
    past the fringe top) map to +-pi/2.  No fringe unwrapping is attempted.
    """
    if not jx_mean > 0:
        raise ValueError(f"jx_mean must be positive, got {jx_mean}")
    ratio = np.clip(np.asarray(mu, dtype=float) / jx_mean, -1.0, 1.0)
    out = np.arcsin(ratio)
    return float(out) if out.ndim == 0 else out


def combine_cascade(estimates: Sequence) -> float:
    """Total phase estimate of a cascade: the sum of all stage estimates."""
    if len(estimates) == 0:
        raise ValueError("cascade needs at least one stage estimate")
    vals = [e.theta_est if isinstance(e, StageEstimate) else e for e in estimates]
    return float(sum(vals))
