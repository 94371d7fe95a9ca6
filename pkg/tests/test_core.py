import numpy as np
import pytest

from sscfw import (Objective, finite_difference_grad_check, quadratic_objective,
                   spectral_radius)


def test_quadratic_identity_examples():
    obj = quadratic_objective(np.eye(2), np.zeros(2))
    assert obj.value(np.array([1.0, 1.0])) == pytest.approx(1.0)
    np.testing.assert_allclose(obj.gradient(np.array([3.0, 4.0])), [3.0, 4.0])
    assert obj.lipschitz_L == pytest.approx(1.0, abs=1e-9)


def test_quadratic_diagonal_lipschitz():
    obj = quadratic_objective(np.diag([1.0, 4.0]), np.zeros(2))
    assert obj.lipschitz_L == pytest.approx(4.0, abs=1e-9)


def test_quadratic_rejects_asymmetric():
    Q = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        quadratic_objective(Q, np.zeros(2))


def test_quadratic_rejects_zero_matrix():
    with pytest.raises(ValueError):
        quadratic_objective(np.zeros((2, 2)), np.ones(2))


def test_objective_requires_positive_lipschitz():
    with pytest.raises(ValueError):
        Objective(f=lambda x: 0.0, grad=lambda x: np.zeros_like(x), lipschitz_L=0.0)


def test_spectral_radius_indefinite():
    Q = np.diag([-3.0, 2.0])
    assert spectral_radius(Q) == pytest.approx(3.0, abs=1e-9)


def test_fd_check_quadratic():
    obj = quadratic_objective(np.eye(2), np.zeros(2))
    dev = finite_difference_grad_check(obj, np.array([1.0, 0.0]), 1e-5)
    assert dev <= 1e-9


def test_fd_check_constant():
    obj = Objective(f=lambda x: 7.0, grad=lambda x: np.zeros_like(x), lipschitz_L=1.0)
    assert finite_difference_grad_check(obj, np.array([0.3, -0.2]), 1e-5) <= 1e-10


def test_fd_check_cubic_taylor():
    # central difference of x^3 at 1 is 3 + h^2
    obj = Objective(f=lambda x: float(x[0] ** 3),
                    grad=lambda x: np.array([3.0 * x[0] ** 2]),
                    lipschitz_L=10.0)
    dev = finite_difference_grad_check(obj, np.array([1.0]), 1e-4)
    assert dev == pytest.approx(1e-8, rel=1e-3)


def test_gradients_match_fd_at_random_points():
    rng = np.random.default_rng(0)
    for seed in range(3):
        n = 5
        A = rng.normal(size=(n, n))
        Q = A + A.T
        b = rng.normal(size=n)
        obj = quadratic_objective(Q, b) if spectral_radius(Q) > 0 else None
        for _ in range(100):
            x = rng.normal(size=n)
            assert finite_difference_grad_check(obj, x, 1e-6) <= 1e-6


def test_lipschitz_bounds_gradient_ratios():
    rng = np.random.default_rng(1)
    n = 6
    A = rng.normal(size=(n, n))
    Q = A + A.T
    obj = quadratic_objective(Q, rng.normal(size=n))
    for _ in range(1000):
        x, y = rng.normal(size=n), rng.normal(size=n)
        num = np.linalg.norm(obj.gradient(x) - obj.gradient(y))
        den = np.linalg.norm(x - y)
        assert num <= obj.lipschitz_L * den * (1.0 + 1e-8)
