import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridclock.noise_lo import (
    NoiseSpec,
    NoiseTrajectory,
    accumulate_phase,
    cycle_phases,
    estimate_psd,
    expected_cycle_phase_variance,
    required_samples,
    synthesize_flicker,
)


def flicker(gamma=1.0, n=2**14, dt=1.0, seed=0, exponent=1.0):
    return synthesize_flicker(NoiseSpec(gamma, dt, n, seed=seed, spectral_exponent=exponent))


def test_zero_gamma_gives_zero_trajectory():
    traj = flicker(gamma=0.0)
    assert np.all(traj.samples == 0.0)


@pytest.mark.parametrize("n", [0, 1, 3, 1000, 2**10 + 1])
def test_rejects_non_power_of_two(n):
    with pytest.raises(ValueError):
        NoiseSpec(1.0, 1.0, n)


@pytest.mark.parametrize("gamma", [math.nan, math.inf, -1.0])
def test_rejects_bad_gamma(gamma):
    with pytest.raises(ValueError):
        NoiseSpec(gamma, 1.0, 16)


def test_deterministic_for_seed():
    a, b = flicker(seed=7), flicker(seed=7)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, flicker(seed=8).samples)


def test_trajectory_is_read_only():
    traj = flicker()
    with pytest.raises(ValueError):
        traj.samples[0] = 1.0


@given(c=st.floats(min_value=1e-3, max_value=1e3), seed=st.integers(0, 2**63))
@settings(max_examples=25, deadline=None)
def test_scaling_with_gamma_is_exact(c, seed):
    base = flicker(gamma=1.0, n=256, seed=seed)
    scaled = flicker(gamma=c, n=256, seed=seed)
    np.testing.assert_allclose(scaled.samples, c * base.samples, rtol=1e-12, atol=0)


def test_zero_sample_mean():
    traj = flicker(n=2**12, seed=3)
    assert abs(traj.samples.mean()) < 1e-12


def test_process_variance_over_seeds():
    # ensemble average of realization variances; flicker realizations scatter ~10% each
    v = [np.mean(flicker(n=2**20, dt=1e-3, seed=s).samples ** 2) for s in range(100)]
    assert np.mean(v) == pytest.approx(1.0, abs=0.05)


def test_flicker_slope():
    slopes = []
    for s in range(5):
        traj = flicker(n=2**18, seed=s)
        spec = traj.spec
        slopes.append(estimate_psd(traj).fit_slope(10 * spec.f_min, spec.f_nyquist / 10))
    assert np.mean(slopes) == pytest.approx(-1.0, abs=0.1)


def test_white_noise_override_is_flat():
    traj = flicker(n=2**16, seed=4, exponent=0.0)
    spec = traj.spec
    assert estimate_psd(traj).fit_slope(10 * spec.f_min, spec.f_nyquist / 10) == pytest.approx(0.0, abs=0.1)


def test_white_noise_variance():
    traj = flicker(n=2**16, seed=5, exponent=0.0)
    assert traj.samples.var() == pytest.approx(1.0, rel=0.03)


@pytest.mark.parametrize("exponent", [0.0, 1.0])
def test_psd_integrates_to_sample_variance(exponent):
    traj = flicker(n=2**14, seed=11, exponent=exponent, dt=0.01)
    psd = estimate_psd(traj)
    assert psd.integrated() == pytest.approx(traj.samples.var(), rel=0.05)


def test_psd_of_zero_trajectory():
    psd = estimate_psd(flicker(gamma=0.0, n=64))
    assert np.all(psd.power == 0.0)


def test_psd_rejects_short_trajectory():
    with pytest.raises(ValueError):
        estimate_psd(flicker(n=4))


def test_stationarity_halves():
    first, second = [], []
    for s in range(50):
        x = flicker(n=2**16, seed=100 + s).samples
        first.append(np.mean(x[: len(x) // 2] ** 2))
        second.append(np.mean(x[len(x) // 2 :] ** 2))
    assert np.mean(first) / np.mean(second) == pytest.approx(1.0, abs=0.10)


def test_accumulate_zero_and_constant():
    spec = NoiseSpec(1.0, 0.25, 16)
    zero = NoiseTrajectory(spec, np.zeros(16))
    assert accumulate_phase(zero, 1, 4) == 0.0
    const = NoiseTrajectory(spec, np.full(16, 3.0))
    # window of 4 samples of 0.25 s: T = 1 s
    assert accumulate_phase(const, 2, 4) == pytest.approx(3.0)


def test_accumulate_out_of_range():
    traj = NoiseTrajectory(NoiseSpec(1.0, 1.0, 16), np.zeros(16))
    with pytest.raises(IndexError):
        accumulate_phase(traj, 4, 4)
    with pytest.raises(IndexError):
        accumulate_phase(traj, -1, 4)


def test_cycle_phases_matches_accumulate():
    traj = flicker(n=2**10, seed=2)
    phases = cycle_phases(traj, 16, 64)
    expected = [accumulate_phase(traj, i, 64) for i in range(16)]
    np.testing.assert_allclose(phases, expected, rtol=1e-12, atol=1e-15)


def _phase_ms(t_tilde, window, seeds, spc=64, n_cycles=10000):
    n = required_samples(n_cycles, spc) * window
    ms = []
    for s in range(seeds):
        traj = synthesize_flicker(NoiseSpec(1.0, t_tilde / spc, n, seed=s))
        ms.append(np.mean(cycle_phases(traj, n_cycles, spc) ** 2))
    return float(np.mean(ms))


def test_expected_phase_variance_white_limit():
    # white samples: the block sum of m unit-variance samples times dt
    spec = NoiseSpec(1.0, 0.5, 2**12, spectral_exponent=0.0)
    assert expected_cycle_phase_variance(spec, 8) == pytest.approx(8 * 0.25, rel=0.01)


def test_expected_phase_variance_single_sample():
    spec = NoiseSpec(2.0, 0.1, 2**10)
    assert expected_cycle_phase_variance(spec, 1) == pytest.approx(4.0 * 0.01, rel=1e-12)


def test_phase_spread_matches_prediction():
    spec = NoiseSpec(1.0, 0.1 / 64, 2**20)
    predicted = expected_cycle_phase_variance(spec, 64)
    assert _phase_ms(0.1, 1, seeds=40) == pytest.approx(predicted, rel=0.05)
    # of order gamma * T, somewhat below it because of the 1/f cutoff
    assert 0.8 < math.sqrt(predicted) / 0.1 < 1.0


def test_phase_spread_insensitive_to_window_doubling():
    one, two = _phase_ms(0.1, 1, seeds=20), _phase_ms(0.1, 2, seeds=20)
    assert math.sqrt(two / one) == pytest.approx(1.0, abs=0.05)
    p1 = expected_cycle_phase_variance(NoiseSpec(1.0, 0.1 / 64, 2**20), 64)
    p2 = expected_cycle_phase_variance(NoiseSpec(1.0, 0.1 / 64, 2**21), 64)
    assert math.sqrt(p2 / p1) == pytest.approx(1.0, abs=0.02)


def test_required_samples():
    assert required_samples(10000, 64) == 2**20
    assert required_samples(2, 1) == 2


def test_csv_dump(tmp_path):
    traj = flicker(n=8)
    path = tmp_path / "noise.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,domega"
    assert len(lines) == 9
    t, w = map(float, lines[3].split(","))
    assert t == traj.times[2] and w == traj.samples[2]
