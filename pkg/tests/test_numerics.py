import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biphoton.analysis import double_gaussian, gaussian, initial_guess, CorrelationProfile
from biphoton.numerics import (FitError, FitProblem, derive_stream, finite_difference_check,
                               least_squares_fit)


def line(p, x):
    return p[0] + p[1] * x, np.column_stack([np.ones_like(x), x])


def gauss3(p, x):
    """Unit-area-free Gaussian ``A exp(-(x-mu)^2 / 2 s^2)`` with plain width."""
    a, mu, s = p
    d = x - mu
    g = np.exp(-0.5 * (d / s) ** 2)
    return a * g, np.column_stack([g, a * g * d / s ** 2, a * g * d ** 2 / s ** 3])


def test_line_through_two_points():
    out = least_squares_fit(FitProblem(line, [0.0, 2.0], [1.0, 5.0], [0.0, 0.0]))
    assert out.converged
    assert out.iterations <= 2
    np.testing.assert_allclose(out.params, [1.0, 2.0], rtol=1e-12)


def test_gaussian_width_recovered():
    x = np.linspace(-10, 10, 50)
    y = np.exp(-0.5 * (x / 2.0) ** 2)
    out = least_squares_fit(FitProblem(gauss3, x, y, [0.8, 0.3, 1.3]))
    assert out.converged
    assert out.params[2] == pytest.approx(2.0, rel=1e-8)


def test_non_finite_data_rejected():
    with pytest.raises(ValueError):
        FitProblem(line, [0.0, 1.0, 2.0], [1.0, np.nan, 2.0], [0.0, 0.0])


def test_non_finite_model_raises():
    def bad(p, x):
        return np.full_like(x, np.inf), np.ones((x.size, 1))
    with pytest.raises(FitError):
        least_squares_fit(FitProblem(bad, [0.0, 1.0], [0.0, 1.0], [0.0]))


def test_problem_validation():
    with pytest.raises(ValueError):
        FitProblem(line, [0.0], [1.0], [0.0, 0.0])  # fewer points than params
    with pytest.raises(ValueError):
        FitProblem(line, [0.0, 1.0], [1.0, 2.0], [0.0, 0.0], lower=[1, 1], upper=[0, 0])
    with pytest.raises(ValueError):
        FitProblem(line, [0.0, 1.0], [1.0, 2.0], [5.0, 0.0], lower=[0, 0], upper=[1, 1])


def test_bounds_are_respected():
    x = np.linspace(0, 1, 10)
    out = least_squares_fit(FitProblem(line, x, 3 + 2 * x, [0.0, 0.0], lower=[-1, -1], upper=[1, 1]))
    assert np.all(out.params <= 1) and np.all(out.params >= -1)
    np.testing.assert_allclose(out.params, [1.0, 1.0])


def test_iteration_cap_reports_not_converged():
    x = np.linspace(-10, 10, 50)
    y = np.exp(-0.5 * (x / 2.0) ** 2)
    out = least_squares_fit(FitProblem(gauss3, x, y, [0.1, 4.0, 6.0]), max_iterations=1)
    assert out.iterations <= 1
    assert not out.converged


def test_gradient_check_gaussian():
    x = np.linspace(-8, 8, 41)
    assert finite_difference_check(gaussian, [3.0, math.log(1.7), 0.4, 0.6], x) < 1e-6


def test_gradient_check_constant_model():
    def const(p, x):
        return np.full_like(x, 2.0), np.zeros((x.size, p.size))
    assert finite_difference_check(const, [1.0, 2.0], np.arange(5.0)) == 0.0


def test_gradient_check_double_gaussian_at_initial_guess():
    x = np.arange(-63, 64, dtype=float)
    y = 40 * np.exp(-0.5 * (x / 1.3) ** 2) + 5 * np.exp(-0.5 * (x / 9) ** 2) + 1
    p0 = initial_guess(CorrelationProfile("difference", x, y))
    assert finite_difference_check(double_gaussian, p0, x) < 1e-5


def test_gradient_check_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_difference_check(gaussian, [1.0, 0.0, 0.0, 0.0], np.arange(3.0), step=0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 5), st.floats(-2, 2), st.floats(0.6, 4), st.integers(0, 2 ** 32 - 1))
def test_local_minimum_certificate(a, mu, s, seed):
    tol = 1e-10
    rng = np.random.default_rng(seed)
    x = np.linspace(-10, 10, 60)
    y = a * np.exp(-0.5 * ((x - mu) / s) ** 2) + 0.01 * rng.standard_normal(x.size)
    prob = FitProblem(gauss3, x, y, [1.0, 0.0, 2.0])
    out = least_squares_fit(prob, tol=tol)
    assert out.converged
    for j in range(3):
        for sign in (-1, 1):
            p = out.params.copy()
            p[j] += sign * tol * abs(p[j])
            r = np.linalg.norm(gauss3(p, x)[0] - y)
            assert r >= out.residual_norm - tol * out.residual_norm


def test_fit_is_deterministic():
    x = np.linspace(-10, 10, 60)
    y = 2 * np.exp(-0.5 * ((x - 0.3) / 1.7) ** 2) + 0.05 * np.sin(7 * x)
    a = least_squares_fit(FitProblem(gauss3, x, y, [1.0, 0.0, 2.0]))
    b = least_squares_fit(FitProblem(gauss3, x, y, [1.0, 0.0, 2.0]))
    assert a.params.tobytes() == b.params.tobytes()
    assert (a.residual_norm, a.iterations) == (b.residual_norm, b.iterations)


def test_stream_reproducible_and_distinct():
    a = derive_stream(42, 7).random(1000)
    b = derive_stream(42, 7).random(1000)
    c = derive_stream(42, 8).random(1000)
    d = derive_stream(43, 7).random(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_stream_normal_moments():
    z = derive_stream(2024, 0).standard_normal(1_000_000)
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert z.var() == pytest.approx(1.0, rel=0.01)


def test_stream_normal_chi_squared():
    from math import erf
    z = derive_stream(99, 3).standard_normal(1_000_000)
    # 100 equiprobable bins under N(0, 1) via bisection on the normal cdf
    cdf = lambda t: 0.5 * (1 + erf(t / math.sqrt(2)))  # noqa: E731
    edges = []
    for q in np.arange(1, 100) / 100:
        lo, hi = -10.0, 10.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if cdf(mid) < q else (lo, mid)
        edges.append(0.5 * (lo + hi))
    counts = np.bincount(np.searchsorted(edges, z), minlength=100)
    expected = z.size / 100
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # chi-squared(99) upper 0.001 quantile
    assert chi2 < 148.23
