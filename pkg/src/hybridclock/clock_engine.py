"""Monte Carlo clock trajectories for single and cascaded Ramsey ensembles.

Every cycle integrates the LO noise over one Ramsey time, measures the
reference ensemble (stage 0) at the full phase and each later stage at the
phase left over after feeding back all earlier estimates.  Measurement,
estimation and feedback take no simulated time and cycles tile the noise
trajectory without dead time.

In ``open-loop-residual`` mode the residuals are taken against the free
running LO, which lets all cycles be processed as arrays.  ``closed-loop-
steering`` applies the accumulated frequency correction cycle by cycle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .estimation import StageEstimate, arcsine_estimate
from .noise_lo import NoiseSpec, cycle_phases, required_samples, synthesize_flicker
from .spin_ensemble import EnsembleSpec, analytic_moments, outcome_stats, sample_outcome

OPEN_LOOP = "open-loop-residual"
CLOSED_LOOP = "closed-loop-steering"
LOOP_MODES = (OPEN_LOOP, CLOSED_LOOP)


@dataclass(frozen=True)
class ClockConfig:
    """One clock trajectory.

    ``stages[0]`` is the reference ensemble; the protocol is coherent-seeded
    when its squeezing is 1.  ``noise.dt`` must equal
    ``ramsey_time / samples_per_cycle``.
    """

    stages: tuple
    ramsey_time: float
    n_cycles: int
    noise: NoiseSpec
    omega0: float = 1.0
    kappa_noise2: float = 0.0
    loop_mode: str = OPEN_LOOP
    seed: int = 0
    samples_per_cycle: int = 64

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValueError("at least one stage is required")
        if not all(isinstance(s, EnsembleSpec) for s in self.stages):
            raise TypeError("stages must be EnsembleSpec instances")
        if not self.ramsey_time > 0:
            raise ValueError("ramsey_time must be positive")
        if self.n_cycles < 2:
            raise ValueError("n_cycles must be >= 2")
        if self.kappa_noise2 < 0:
            raise ValueError("kappa_noise2 must be >= 0")
        if self.loop_mode not in LOOP_MODES:
            raise ValueError(f"loop_mode must be one of {LOOP_MODES}, got {self.loop_mode!r}")
        if self.samples_per_cycle < 1:
            raise ValueError("samples_per_cycle must be >= 1")
        if not math.isclose(self.noise.dt * self.samples_per_cycle, self.ramsey_time, rel_tol=1e-12):
            raise ValueError("noise.dt * samples_per_cycle must equal ramsey_time")
        if self.n_cycles * self.samples_per_cycle > self.noise.n_samples:
            raise ValueError(
                f"noise trajectory has {self.noise.n_samples} samples, "
                f"{self.n_cycles * self.samples_per_cycle} needed"
            )

    @property
    def nu(self) -> int:
        return len(self.stages) - 1

    @property
    def mode(self) -> str:
        return "coherent-seeded" if self.stages[0].is_coherent else "squeezed-seeded"


@dataclass(frozen=True)
class CycleRecord:
    cycle_index: int
    theta_true: float
    stages: tuple  # (effective_theta, StageEstimate) per stage
    theta_est_total: float
    residual: float


@dataclass(frozen=True)
class TrajectoryRecords:
    """Per-cycle results stored column-wise; index to get a ``CycleRecord``.

    ``theta_eff``, ``mu`` and ``theta_est`` have shape (n_cycles, n_stages).
    """

    theta_true: np.ndarray = field(repr=False)
    theta_eff: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    theta_est: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.theta_true)

    @property
    def theta_est_total(self) -> np.ndarray:
        return self.theta_est.sum(axis=1)

    @property
    def residual(self) -> np.ndarray:
        return self.theta_true - self.theta_est_total

    def __getitem__(self, n: int) -> CycleRecord:
        stages = tuple(
            (float(self.theta_eff[n, k]), StageEstimate(k, float(self.mu[n, k]), float(self.theta_est[n, k])))
            for k in range(self.theta_eff.shape[1])
        )
        total = float(self.theta_est_total[n])
        return CycleRecord(n, float(self.theta_true[n]), stages, total, float(self.theta_true[n]) - total)

    def to_csv(self, path) -> None:
        res = self.residual
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cycle", "theta_true", "stage", "theta_eff", "mu", "theta_est", "residual"])
            for n in range(len(self)):
                for k in range(self.theta_eff.shape[1]):
                    writer.writerow([
                        n,
                        repr(float(self.theta_true[n])),
                        k,
                        repr(float(self.theta_eff[n, k])),
                        repr(float(self.mu[n, k])),
                        repr(float(self.theta_est[n, k])),
                        repr(float(res[n])),
                    ])


def apply_feedback_dephasing(theta_fb, kappa_noise2: float, rng: np.random.Generator):
    """Add a zero-mean Gaussian phase error of variance ``kappa_noise2``."""
    if kappa_noise2 < 0:
        raise ValueError("kappa_noise2 must be >= 0")
    theta_fb = np.asarray(theta_fb, dtype=float)
    if kappa_noise2 == 0:
        return theta_fb if theta_fb.ndim else float(theta_fb)
    out = theta_fb + math.sqrt(kappa_noise2) * rng.standard_normal(theta_fb.shape)
    return out if out.ndim else float(out)


def steer(current_correction: float, omega_est: float) -> float:
    """New LO frequency correction after a cycle's frequency estimate."""
    return current_correction + omega_est


def _measurement_rng(seed: int) -> np.random.Generator:
    # distinct stream from the noise synthesis, which seeds on NoiseSpec.seed
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x5EED]))


def _measure(spec: EnsembleSpec, moments, theta, rng) -> tuple[np.ndarray, np.ndarray]:
    mu = sample_outcome(outcome_stats(moments, theta), spec.n_atoms, rng)
    return mu, arcsine_estimate(mu, moments.jx_mean)


def run_cycles(config: ClockConfig, free_phases: np.ndarray) -> TrajectoryRecords:
    """Run the measurement/feedback chain on given free-running cycle phases."""
    rng = _measurement_rng(config.seed)
    moments = [analytic_moments(s) for s in config.stages]
    n, n_st = len(free_phases), len(config.stages)
    theta_eff = np.empty((n, n_st))
    mu = np.empty((n, n_st))
    est = np.empty((n, n_st))

    if config.loop_mode == OPEN_LOOP:
        theta = np.asarray(free_phases, dtype=float)
        fed_back = np.zeros(n)
        for k, (spec, mom) in enumerate(zip(config.stages, moments)):
            eff = theta - fed_back
            if k > 0:
                eff = apply_feedback_dephasing(eff, config.kappa_noise2, rng)
            theta_eff[:, k] = eff
            mu[:, k], est[:, k] = _measure(spec, mom, eff, rng)
            fed_back = fed_back + est[:, k]
        return TrajectoryRecords(theta, theta_eff, mu, est)

    theta = np.empty(n)
    correction = 0.0
    T = config.ramsey_time
    for i in range(n):
        theta[i] = free_phases[i] - correction * T
        fed_back = 0.0
        for k, (spec, mom) in enumerate(zip(config.stages, moments)):
            eff = theta[i] - fed_back
            if k > 0:
                eff = apply_feedback_dephasing(eff, config.kappa_noise2, rng)
            theta_eff[i, k] = eff
            m, e = _measure(spec, mom, eff, rng)
            mu[i, k], est[i, k] = m, e
            fed_back += e
        correction = steer(correction, fed_back / T)
    return TrajectoryRecords(theta, theta_eff, mu, est)


def run_trajectory(config: ClockConfig) -> TrajectoryRecords:
    """Synthesize the LO noise for ``config`` and run every cycle."""
    traj = synthesize_flicker(config.noise)
    phases = cycle_phases(traj, config.n_cycles, config.samples_per_cycle)
    return run_cycles(config, phases)


def make_config(
    stages: Sequence[EnsembleSpec],
    t_tilde: float,
    n_cycles: int,
    *,
    gamma_lo: float = 1.0,
    omega0: float = 1.0,
    kappa_noise2: float = 0.0,
    loop_mode: str = OPEN_LOOP,
    seed: int = 0,
    samples_per_cycle: int = 64,
    window_factor: int = 1,
) -> ClockConfig:
    """Build a config in rescaled units: ``ramsey_time = t_tilde / gamma_lo``.

    The noise trajectory is the smallest power of two covering the cycles,
    times ``window_factor`` (a larger window lowers the 1/f cutoff).
    """
    T = t_tilde / gamma_lo if gamma_lo > 0 else t_tilde
    n_samples = required_samples(n_cycles, samples_per_cycle) * int(window_factor)
    noise = NoiseSpec(gamma_lo=gamma_lo, dt=T / samples_per_cycle, n_samples=n_samples, seed=seed)
    return ClockConfig(
        stages=tuple(stages),
        ramsey_time=T,
        n_cycles=n_cycles,
        noise=noise,
        omega0=omega0,
        kappa_noise2=kappa_noise2,
        loop_mode=loop_mode,
        seed=seed,
        samples_per_cycle=samples_per_cycle,
    )
