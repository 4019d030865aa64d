import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from mclt.distances import (
    kolmogorov_empirical_vs_normal,
    normal_cdf,
    normal_quantile,
    wasserstein_empirical_vs_normal,
    wasserstein_sample_vs_sample,
)
from mclt.errors import DomainError, EmptySample, LengthMismatch

finite = st.floats(-6, 6, allow_nan=False)
samples = arrays(np.float64, st.integers(1, 40), elements=finite)


@pytest.mark.parametrize("x", [-30.0, -8.0, -1.0, 0.0, 0.3, 1.0, 5.0, 8.0])
def test_normal_cdf_against_mpmath(x):
    with mpmath.workdps(50):
        exact = float(mpmath.ncdf(x))
    assert normal_cdf(x) == pytest.approx(exact, rel=1e-12, abs=1e-300)


def test_normal_cdf_at_one():
    assert normal_cdf(1.0) == pytest.approx(0.841344746, abs=1e-9)


@pytest.mark.parametrize("p", [1e-300, 1e-12, 0.01, 0.3, 0.5, 0.975, 1 - 1e-10])
def test_normal_quantile_inverts_cdf(p):
    x = normal_quantile(p)
    with mpmath.workdps(60):
        exact = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1)) if p > 1e-100 else None
    if exact is not None:
        assert x == pytest.approx(exact, rel=1e-12, abs=1e-14)
    assert normal_cdf(x) == pytest.approx(p, rel=1e-12)


def test_normal_quantile_value():
    assert normal_quantile(0.975) == pytest.approx(1.95996398, abs=1e-7)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, float("nan")])
def test_normal_quantile_domain(p):
    with pytest.raises(DomainError):
        normal_quantile(p)


def test_wasserstein_closed_forms():
    assert wasserstein_empirical_vs_normal([0.0]).value == pytest.approx(0.7978845608, abs=1e-9)
    assert wasserstein_empirical_vs_normal([-1.0, 1.0]).value == pytest.approx(0.5353772, abs=1e-6)
    assert kolmogorov_empirical_vs_normal([-1.0, 1.0]).value == pytest.approx(0.341344746, abs=1e-9)


@settings(max_examples=30)
@given(samples)
def test_wasserstein_matches_quadrature_oracle(xs):
    support, inv = np.unique(xs, return_inverse=True)
    probs = np.bincount(inv) / xs.size
    assert wasserstein_empirical_vs_normal(xs).value == pytest.approx(
        oracles.dw_discrete_vs_normal(support, probs), abs=1e-8
    )


@given(samples)
def test_kolmogorov_matches_oracle_and_bounds(xs):
    support, inv = np.unique(xs, return_inverse=True)
    probs = np.bincount(inv) / xs.size
    dk = kolmogorov_empirical_vs_normal(xs).value
    assert 0 <= dk <= 1
    assert dk == pytest.approx(oracles.dk_discrete_vs_normal(support, probs), abs=1e-12)


@given(samples, st.floats(-3, 3))
def test_wasserstein_shift_triangle(xs, c):
    # d_W(law + c, N) <= d_W(law, N) + |c|, and permutation invariance
    base = wasserstein_empirical_vs_normal(xs).value
    shifted = wasserstein_empirical_vs_normal(xs + c).value
    assert shifted <= base + abs(c) + 1e-12
    assert base >= 0
    assert wasserstein_empirical_vs_normal(xs[::-1]).value == pytest.approx(base, abs=1e-13)


@given(arrays(np.float64, st.integers(1, 20), elements=finite), st.integers(1, 4))
def test_weights_equal_repetition(xs, rep):
    w = np.arange(1, xs.size + 1, dtype=float)
    repeated = np.repeat(xs, np.arange(1, xs.size + 1))
    a = wasserstein_empirical_vs_normal(xs, w * rep).value
    b = wasserstein_empirical_vs_normal(repeated).value
    assert a == pytest.approx(b, abs=1e-12)


def test_uniform_quantile_grid_converges():
    values = []
    for m in (100, 1000, 10_000):
        grid = normal_quantile((np.arange(1, m + 1) - 0.5) / m)
        values.append(wasserstein_empirical_vs_normal(grid).value)
    assert values[0] > values[1] > values[2] > 0
    assert values[2] < 2.5e-4
    # independent check at a size the quadrature oracle handles quickly
    m = 1000
    grid = normal_quantile((np.arange(1, m + 1) - 0.5) / m)
    exact = oracles.dw_discrete_vs_normal(grid, np.full(m, 1.0 / m))
    assert values[1] == pytest.approx(exact, rel=1e-6)


def test_large_normal_sample():
    z = np.random.default_rng(0).standard_normal(1_000_000)
    assert wasserstein_empirical_vs_normal(z).value < 0.005
    assert kolmogorov_empirical_vs_normal(z).value < 0.002


def test_bootstrap_stderr_is_reproducible_and_sensible():
    z = np.random.default_rng(1).standard_normal(4000)
    a = wasserstein_empirical_vs_normal(z, bootstrap=200, seed=3)
    b = wasserstein_empirical_vs_normal(z, bootstrap=200, seed=3)
    assert a == b
    assert 0 < a.stderr < 0.02
    assert wasserstein_empirical_vs_normal(z).stderr == 0.0


def test_sample_vs_sample():
    assert wasserstein_sample_vs_sample([0, 2], [1, 3]).value == 1.0
    assert wasserstein_sample_vs_sample([3, 0], [1, 2]).value == 1.0
    with pytest.raises(LengthMismatch):
        wasserstein_sample_vs_sample([0], [1, 2])
    with pytest.raises(EmptySample):
        wasserstein_sample_vs_sample([], [])


def test_input_errors():
    with pytest.raises(EmptySample):
        wasserstein_empirical_vs_normal([])
    with pytest.raises(DomainError):
        kolmogorov_empirical_vs_normal([0.0, math.inf])
