import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridclock.exact_oracle import build_pseudo_squeezed_state, exact_moments
from hybridclock.spin_ensemble import (
    EnsembleSpec,
    analytic_moments,
    outcome_stats,
    sample_outcome,
    snap_to_grid,
)


def test_moments_n100_coherent():
    m = analytic_moments(EnsembleSpec(100, 1.0))
    assert m.jy_var == 25.0
    assert m.jx_mean == pytest.approx(49.750623959, rel=1e-10)
    assert m.jx2_mean == pytest.approx(2475.2483416334, rel=1e-10)
    assert m.jx_var == pytest.approx(m.jx2_mean - m.jx_mean**2, rel=1e-6)


def test_moments_large_s2n_limit():
    m = analytic_moments(EnsembleSpec(10**6, 10.0))
    assert m.jx_mean == pytest.approx(5e5, rel=1e-7)
    assert m.jx_var / m.jx_mean**2 < 1e-15


def test_coherent_member_jy_var_exact():
    for n in (1, 7, 100, 12345):
        assert analytic_moments(EnsembleSpec(n)).jy_var == n / 4


@pytest.mark.parametrize("bad", [dict(n_atoms=0), dict(n_atoms=2.5), dict(n_atoms=10, squeezing=0.0),
                                 dict(n_atoms=10, squeezing=-1.0)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        EnsembleSpec(**bad)


def test_moments_against_exact_oracle():
    # N=60, s=0.5: <Jx> and (dJy)^2 agree with the state vector within 2%
    spec = EnsembleSpec(60, 0.5)
    a, e = analytic_moments(spec), exact_moments(build_pseudo_squeezed_state(spec))
    assert e.jx_mean == pytest.approx(a.jx_mean, rel=0.02)
    assert e.jy_var == pytest.approx(a.jy_var, rel=0.02)


def test_moment_invariants():
    for n in (1, 10, 1000):
        for s in (0.05, 0.3, 1.0, 3.0):
            m = analytic_moments(EnsembleSpec(n, s))
            assert m.jy_var > 0
            assert m.jx2_mean >= m.jx_mean**2 * (1 - 1e-12)
            assert abs(m.jx_mean) <= n / 2
            assert m.jx2_mean <= n * n / 4


def test_outcome_stats_special_angles():
    m = analytic_moments(EnsembleSpec(100, 1.0))
    mean, var = outcome_stats(m, 0.0)
    assert mean == 0.0 and var == m.jy_var
    mean, var = outcome_stats(m, math.pi / 2)
    assert mean == pytest.approx(m.jx_mean) and var == pytest.approx(m.jx_var, abs=1e-12)


def test_outcome_stats_pi_over_6():
    m = analytic_moments(EnsembleSpec(100, 1.0))
    mean, var = outcome_stats(m, math.pi / 6)
    assert mean == pytest.approx(24.8753120, rel=1e-8)
    assert var == pytest.approx(25 * 0.75 + m.jx_var * 0.25, rel=1e-12)


@given(theta=st.floats(-3.0, 3.0), s=st.floats(0.05, 2.0))
def test_outcome_stats_parity(theta, s):
    m = analytic_moments(EnsembleSpec(200, s))
    mp, vp = outcome_stats(m, theta)
    mm, vm = outcome_stats(m, -theta)
    assert mp == pytest.approx(-mm, abs=1e-12)
    assert vp == pytest.approx(vm, rel=1e-12)


def test_linearization_matches_error_propagation():
    # variance / (<Jx> cos t)^2 ~ dJy^2/<Jx>^2 + dJx^2/<Jx>^2 t^2 up to O(t^4)
    m = analytic_moments(EnsembleSpec(1000, 0.2))
    a, b = m.jy_var / m.jx_mean**2, m.jx_var / m.jx_mean**2
    for t in (1e-2, 2e-2, 4e-2):
        _, var = outcome_stats(m, t)
        ratio = var / (m.jx_mean * math.cos(t)) ** 2
        assert abs(ratio - (a + b * t * t)) < 2 * (a + b) * t**4


def test_snap_to_grid_even_and_odd():
    np.testing.assert_array_equal(snap_to_grid([0.2, -0.7, 0.5, -0.5, 1.5], 10), [0, -1, 0, 0, 1])
    np.testing.assert_array_equal(snap_to_grid([0.2, -0.7, 1.0, -2.0, 0.0], 11), [0.5, -0.5, 0.5, -1.5, 0.5])
    np.testing.assert_array_equal(snap_to_grid([100.0, -100.0], 10), [5, -5])
    np.testing.assert_array_equal(snap_to_grid([100.0, -100.0], 11), [5.5, -5.5])


def test_sample_zero_variance(rng):
    mu = sample_outcome((np.zeros(100), np.zeros(100)), 10, rng)
    assert np.all(mu == 0)


def test_sample_clamps(rng):
    mu = sample_outcome((np.full(100, 20.0), np.full(100, 4.0)), 20, rng)
    assert np.all(mu == 10)


def test_sample_negative_variance_rejected(rng):
    with pytest.raises(ValueError):
        sample_outcome((0.0, -1.0), 10, rng)


def test_sample_variance_coherent(rng):
    n = 10**4
    m = analytic_moments(EnsembleSpec(n))
    mu = sample_outcome(outcome_stats(m, np.zeros(10**6)), n, rng)
    # rounding to the integer grid adds 1/12, well inside the tolerance
    assert mu.var() == pytest.approx(n / 4, rel=0.01)


def test_sampling_is_deterministic_per_stream():
    stats = (np.zeros(50), np.full(50, 9.0))
    a = sample_outcome(stats, 100, np.random.default_rng(5))
    b = sample_outcome(stats, 100, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)
