import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import least_squares

from tlsfluct.lm import covariance, levenberg_marquardt, numerical_jacobian


def rosenbrock(x):
    return np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])


def test_rosenbrock_matches_scipy():
    ours = levenberg_marquardt(rosenbrock, [-1.2, 1.0])
    ref = least_squares(rosenbrock, [-1.2, 1.0], method="lm", xtol=1e-14, ftol=1e-14)
    assert ours.success
    np.testing.assert_allclose(ours.x, ref.x, atol=1e-8)
    np.testing.assert_allclose(ours.x, [1.0, 1.0], atol=1e-8)


def _exp_problem(seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 4, 60)
    y = 2.5 * np.exp(-1.3 * t) + 0.4 + 0.01 * rng.standard_normal(t.size)
    return t, y, lambda p: p[0] * np.exp(-p[1] * t) + p[2] - y


@pytest.mark.parametrize("seed", range(5))
def test_exponential_fit_matches_scipy(seed):
    t, y, f = _exp_problem(seed)
    ours = levenberg_marquardt(f, [1.0, 1.0, 0.0])
    ref = least_squares(f, [1.0, 1.0, 0.0], method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    np.testing.assert_allclose(ours.x, ref.x, rtol=1e-6)
    assert ours.cost == pytest.approx(ref.cost, rel=1e-9)


def test_bounded_matches_scipy():
    t, y, f = _exp_problem(0)
    bounds = ([0, 0, 0.5], [10, 10, 10])
    ours = levenberg_marquardt(f, [1.0, 1.0, 1.0], bounds=bounds)
    ref = least_squares(f, [1.0, 1.0, 1.0], bounds=bounds, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    np.testing.assert_allclose(ours.x, ref.x, rtol=1e-6)
    assert ours.x[2] == 0.5
    assert ours.active_mask[2] and not ours.active_mask[0]


def test_complex_residuals():
    f = np.linspace(-1, 1, 40)
    truth = 0.3 + 0.7j

    def resid(p):
        return (p[0] + 1j * p[1]) / (1 + 2j * f) - truth / (1 + 2j * f)

    res = levenberg_marquardt(resid, [0.0, 0.0])
    np.testing.assert_allclose(res.x, [0.3, 0.7], atol=1e-12)


def test_budget_exhaustion_reported():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0], max_nfev=3)
    assert res.status == 0 and not res.success


def test_nonfinite_reported():
    res = levenberg_marquardt(lambda x: np.array([np.nan, x[0]]), [1.0])
    assert res.status == -1


def test_numerical_jacobian():
    x = np.array([0.7, -0.3])
    J, _ = numerical_jacobian(rosenbrock, x)
    exact = np.array([[-20 * x[0], 10], [-1, 0]])
    np.testing.assert_allclose(J, exact, atol=1e-7)


def test_covariance_linear_regression():
    rng = np.random.default_rng(3)
    x = np.linspace(0, 1, 50)
    A = np.stack([np.ones_like(x), x], axis=1)
    y = A @ [1.0, 2.0] + 0.1 * rng.standard_normal(50)
    beta, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = A @ beta - y
    s2 = r @ r / 48
    np.testing.assert_allclose(covariance(A, r), s2 * np.linalg.inv(A.T @ A), rtol=1e-10)
    cov = covariance(A, r, active=np.array([False, True]))
    assert cov[1, 1] == 0 and cov[0, 1] == 0


@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(-5, 5))
def test_recovers_noiseless_linear(a, b, c):
    x = np.linspace(-1, 1, 20)
    y = a + b * x + c * x**2
    res = levenberg_marquardt(lambda p: p[0] + p[1] * x + p[2] * x**2 - y, [0.0, 1.0, 0.0])
    np.testing.assert_allclose(res.x, [a, b, c], atol=1e-8)
