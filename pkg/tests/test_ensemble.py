import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evflow.ensemble import (
    ENTRY_LAWS,
    banded_profile,
    marchenko_pastur_edges,
    sample_goe,
    sample_gue,
    sample_matrix,
    sample_wishart_factor,
    standardized_entries,
    uniform_profile,
)
from evflow.errors import InfeasibleProfileError, InvalidDimensionError, UnsupportedAspectError
from evflow._rng import make_rng


@pytest.mark.parametrize("N", [2, 4, 1000])
def test_uniform_profile(N):
    p = uniform_profile(N)
    assert np.all(p.sigma2 == 1.0 / N)
    assert np.max(np.abs(p.sigma2.sum(axis=0) - 1)) < 1e-12
    assert p.violations() == []


def test_uniform_profile_rejects_small_dimension():
    with pytest.raises(InvalidDimensionError):
        uniform_profile(1)


def test_banded_degenerate_interval_is_uniform():
    assert np.array_equal(banded_profile(4, 1, 1, seed=3).sigma2, uniform_profile(4).sigma2)


def test_banded_invariants_example():
    p = banded_profile(8, 0.5, 2.0, seed=7)
    assert np.max(np.abs(p.sigma2.sum(axis=0) - 1)) < 1e-12
    assert np.array_equal(p.sigma2, p.sigma2.T)
    assert p.sigma2.min() >= 0.5 / 8 * (1 - 1e-12)
    assert p.sigma2.max() <= 2.0 / 8 * (1 + 1e-12)


def test_banded_infeasible():
    with pytest.raises(InfeasibleProfileError):
        banded_profile(8, 0.9, 0.95, seed=1)


@settings(max_examples=30, deadline=None)
@given(
    N=st.integers(2, 40),
    c_min=st.floats(0.2, 1.0),
    c_max=st.floats(1.0, 3.0),
    seed=st.integers(0, 2**32),
)
def test_banded_profiles_pass_their_own_checks(N, c_min, c_max, seed):
    p = banded_profile(N, c_min, c_max, seed)
    assert p.violations() == []
    assert p.sigma2.min() >= c_min / N * (1 - 1e-12)
    assert p.sigma2.max() <= c_max / N * (1 + 1e-12)


@pytest.mark.parametrize("law", ENTRY_LAWS)
def test_standardized_entry_moments(law):
    x = standardized_entries(law, 200_000, make_rng(5))
    assert abs(x.mean()) < 4 * x.std() / np.sqrt(x.size)
    assert abs(x.var() - 1) < 0.02


@pytest.mark.parametrize("law", ENTRY_LAWS)
def test_sample_matrix_entry_statistics(law):
    prof = uniform_profile(4)
    T = 100_000
    draws = np.array([sample_matrix(prof, law, "symmetric", seed) for seed in range(T)])
    # entry means within 4 standard errors
    se = np.sqrt(prof.sigma2 / T)
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * se)
    # the mean is known to vanish, so the variance is estimated by E h^2;
    # for the Bernoulli law h^2 is constant and the standard error is zero
    h2 = draws[:, 0, 1] ** 2
    assert abs(h2.mean() - 0.25) <= 3 * h2.std() / np.sqrt(T) + 1e-15


def test_sample_matrix_symmetry_and_determinism():
    prof = banded_profile(6, 0.5, 2.0, seed=2)
    H = sample_matrix(prof, "uniform_centered", "symmetric", seed=11)
    assert np.array_equal(H - H.T, np.zeros_like(H))
    assert np.array_equal(H, sample_matrix(prof, "uniform_centered", "symmetric", seed=11))
    G = sample_matrix(prof, "gaussian", "hermitian", seed=4)
    assert np.array_equal(G, G.conj().T)


def test_hermitian_entry_split():
    prof = uniform_profile(3)
    draws = np.array([sample_matrix(prof, "gaussian", "hermitian", s)[0, 1] for s in range(20_000)])
    # real and imaginary parts each carry half of the 1/3 variance
    assert abs(draws.real.var() - 1 / 6) < 4 * np.sqrt(2 / 20_000) / 6
    assert abs(draws.imag.var() - 1 / 6) < 4 * np.sqrt(2 / 20_000) / 6


def test_goe_variances():
    T = 100_000
    draws = np.array([sample_goe(10, s)[:2, :2] for s in range(T)])
    h11, h12 = draws[:, 0, 0], draws[:, 0, 1]
    assert abs(h11.var() - 0.2) < 3 * np.sqrt(2 / T) * 0.2
    assert abs(h12.var() - 0.1) < 3 * np.sqrt(2 / T) * 0.1


def test_gue_is_hermitian_with_declared_variances():
    H = sample_gue(6, 3)
    assert np.array_equal(H, H.conj().T)
    T = 20_000
    h = np.array([sample_gue(10, s)[0, 1] for s in range(T)])
    assert abs(np.mean(np.abs(h) ** 2) - 0.1) < 4 * 0.1 / np.sqrt(T)


def test_wishart_factor():
    X = sample_wishart_factor(3, 3, 1)
    assert np.linalg.eigvalsh(X.T @ X).min() >= -1e-12
    assert np.array_equal(X, sample_wishart_factor(3, 3, 1))
    with pytest.raises(UnsupportedAspectError):
        sample_wishart_factor(2, 3, 0)


def test_wishart_spectrum_near_marchenko_pastur_edges():
    lo, hi = marchenko_pastur_edges(200, 100)
    ev = np.linalg.eigvalsh(sample_wishart_factor(200, 100, 9).T @ sample_wishart_factor(200, 100, 9))
    assert ev.min() > lo - 0.15 and ev.max() < hi + 0.3
    # edges solved independently from the quadratic for the MP density support
    ratio = 2.0
    assert np.isclose(lo, (np.sqrt(ratio) - 1) ** 2) and np.isclose(hi, (np.sqrt(ratio) + 1) ** 2)
