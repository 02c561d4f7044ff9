"""Free-running local-oscillator noise with a 1/f power spectrum.

Trajectories are synthesized by shaping a white complex Gaussian spectrum,
so the spectral slope is exact down to the lowest resolved frequency
``1/(n_samples * dt)``.  The DC bin is always zero: every trajectory has
exactly zero sample mean and the 1/f divergence is cut off there.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import digamma


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters of a sampled LO frequency-deviation trajectory.

    ``gamma_lo`` is the process standard deviation in rad/s and
    ``spectral_exponent`` the power-law index of the one-sided PSD,
    ``S(f) ~ f**-spectral_exponent``.
    """

    gamma_lo: float
    dt: float
    n_samples: int
    seed: int = 0
    spectral_exponent: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.gamma_lo):
            raise ValueError(f"gamma_lo must be finite, got {self.gamma_lo}")
        if self.gamma_lo < 0:
            raise ValueError(f"gamma_lo must be >= 0, got {self.gamma_lo}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        n = int(self.n_samples)
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_samples must be a power of two >= 2, got {self.n_samples}")
        if not math.isfinite(self.spectral_exponent):
            raise ValueError("spectral_exponent must be finite")

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @property
    def f_min(self) -> float:
        return 1.0 / self.duration

    @property
    def f_nyquist(self) -> float:
        return 0.5 / self.dt


@dataclass(frozen=True)
class NoiseTrajectory:
    spec: NoiseSpec
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.samples) != self.spec.n_samples:
            raise ValueError("trajectory length does not match spec.n_samples")
        self.samples.setflags(write=False)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.spec.n_samples) * self.spec.dt

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "domega"])
            for t, w in zip(self.times, self.samples):
                writer.writerow([repr(float(t)), repr(float(w))])


def _shaping_filter(spec: NoiseSpec) -> tuple[np.ndarray, float]:
    """Amplitude filter over rfft bins and the factor giving unit process variance."""
    n = spec.n_samples
    freqs = np.fft.rfftfreq(n, d=spec.dt)
    amp = np.zeros_like(freqs)
    amp[1:] = freqs[1:] ** (-0.5 * spec.spectral_exponent)
    # Var(x_j) for irfft of Z_k * amp_k with E|Z_k|^2 = 1 (Nyquist bin real):
    # (2 * sum_{0<k<n/2} amp_k^2 + amp_{n/2}^2) / n^2
    power = 2.0 * np.sum(amp[1:-1] ** 2) + amp[-1] ** 2
    norm = n / math.sqrt(power)
    return amp, norm


def synthesize_flicker(spec: NoiseSpec) -> NoiseTrajectory:
    """Draw one stationary Gaussian trajectory with PSD ~ 1/f**exponent.

    The result has process variance ``gamma_lo**2`` (an ensemble property;
    a single realization's sample variance fluctuates around it) and exactly
    zero sample mean.  Identical specs give bit-identical samples, and the
    samples scale linearly with ``gamma_lo`` for a fixed seed.
    """
    n = spec.n_samples
    if spec.gamma_lo == 0.0:
        return NoiseTrajectory(spec, np.zeros(n))
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    n_bins = n // 2 + 1
    z = rng.standard_normal(n_bins) + 1j * rng.standard_normal(n_bins)
    z *= math.sqrt(0.5)
    # Nyquist bin must be real for a real signal; keep unit variance there.
    z[-1] = rng.standard_normal()
    amp, norm = _shaping_filter(spec)
    x = np.fft.irfft(z * amp, n=n) * (norm * spec.gamma_lo)
    return NoiseTrajectory(spec, x)


def expected_cycle_phase_variance(spec: NoiseSpec, samples_per_cycle: int) -> float:
    """Ensemble mean of the squared cycle phase for trajectories drawn from ``spec``.

    Each rfft bin contributes its shaped power times the gain of the
    ``samples_per_cycle``-sample block sum at that frequency.
    """
    n, m = spec.n_samples, int(samples_per_cycle)
    if not 1 <= m <= n:
        raise ValueError("samples_per_cycle must lie in [1, n_samples]")
    amp, norm = _shaping_filter(spec)
    k = np.arange(1, len(amp))
    gain = (np.sin(np.pi * k * m / n) / np.sin(np.pi * k / n)) ** 2
    power = 2.0 * amp[1:] ** 2 * gain
    power[-1] = amp[-1] ** 2 * gain[-1]
    return float((spec.gamma_lo * spec.dt * norm / n) ** 2 * power.sum())


@dataclass(frozen=True)
class Spectrum:
    """Band-averaged one-sided PSD.

    ``bandwidth`` is each band's width in Hz and ``counts`` the number of raw
    periodogram bins averaged into it.
    """

    freq: np.ndarray
    power: np.ndarray
    bandwidth: np.ndarray
    counts: np.ndarray

    def integrated(self) -> float:
        return float(np.sum(self.power * self.bandwidth))

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.freq.tolist(), self.power.tolist()))

    def fit_slope(self, f_lo: float, f_hi: float) -> float:
        """Least-squares slope of log(power) against log(freq) on [f_lo, f_hi].

        Each raw bin is exponentially distributed, so the log of an m-bin
        average is biased by ``digamma(m) - log(m)``; that offset is removed
        before fitting (it matters for the sparse low-frequency bands).
        """
        sel = (self.freq >= f_lo) & (self.freq <= f_hi) & (self.power > 0)
        if sel.sum() < 3:
            raise ValueError("fewer than three bands inside the fit range")
        m = self.counts[sel]
        log_p = np.log(self.power[sel]) - (digamma(m) - np.log(m))
        slope, _ = np.polyfit(np.log(self.freq[sel]), log_p, 1)
        return float(slope)


def estimate_psd(traj: NoiseTrajectory, bands_per_decade: int = 20) -> Spectrum:
    """Full-length periodogram averaged over logarithmically spaced bands.

    Raw bins are grouped, never windowed or detrended, so the band powers
    integrate to the sample variance about the mean (Parseval).
    """
    x = np.asarray(traj.samples, dtype=float)
    n = len(x)
    if n < 8:
        raise ValueError(f"need at least 8 samples for a PSD, got {n}")
    dt = traj.spec.dt
    df = 1.0 / (n * dt)
    spec = np.abs(np.fft.rfft(x - x.mean())) ** 2 * (dt / n)
    spec[1:] *= 2.0
    if n % 2 == 0:
        spec[-1] /= 2.0
    k = np.arange(len(spec))
    # drop DC: it carries no power after mean removal
    k, spec = k[1:], spec[1:]
    decades = math.log10(k[-1]) if k[-1] > 1 else 1.0
    n_edges = max(2, int(math.ceil(decades * bands_per_decade)) + 1)
    edges = np.unique(np.floor(np.logspace(0, math.log10(k[-1] + 1), n_edges)).astype(int))
    edges[-1] = k[-1] + 1
    band = np.searchsorted(edges, k, side="right") - 1
    counts = np.bincount(band)
    keep = counts > 0
    p_sum = np.bincount(band, weights=spec)[keep]
    f_sum = np.bincount(band, weights=k * df)[keep]
    counts = counts[keep]
    return Spectrum(
        freq=f_sum / counts, power=p_sum / counts, bandwidth=counts * df, counts=counts
    )


def accumulate_phase(traj: NoiseTrajectory, cycle_index: int, samples_per_cycle: int) -> float:
    """Rectangle-rule phase integral of the frequency deviation over one cycle."""
    if samples_per_cycle < 1:
        raise ValueError("samples_per_cycle must be >= 1")
    start = cycle_index * samples_per_cycle
    stop = start + samples_per_cycle
    if cycle_index < 0 or stop > traj.spec.n_samples:
        raise IndexError(
            f"cycle {cycle_index} spans samples [{start}, {stop}) outside trajectory of "
            f"{traj.spec.n_samples}"
        )
    return float(np.sum(traj.samples[start:stop]) * traj.spec.dt)


def cycle_phases(traj: NoiseTrajectory, n_cycles: int, samples_per_cycle: int) -> np.ndarray:
    """Phases of ``n_cycles`` contiguous cycles; vectorized ``accumulate_phase``."""
    need = n_cycles * samples_per_cycle
    if need > traj.spec.n_samples:
        raise IndexError(f"{n_cycles} cycles need {need} samples, trajectory has {traj.spec.n_samples}")
    block = traj.samples[:need].reshape(n_cycles, samples_per_cycle)
    return block.sum(axis=1) * traj.spec.dt


def required_samples(n_cycles: int, samples_per_cycle: int) -> int:
    """Smallest power of two holding ``n_cycles`` cycles."""
    need = max(2, n_cycles * samples_per_cycle)
    return 1 << (need - 1).bit_length()
