import numpy as np
import pytest

from fsiopt.time_stepping import TimeScheme, ale_velocity, bdf_affine, newmark_affine


def test_newmark_trapezoidal_coefficients():
    sch = TimeScheme(dt=0.1)
    av, _, aa, _ = newmark_affine(sch, 1, np.zeros(2), np.zeros(2), np.zeros(2))
    assert av == pytest.approx(20.0) and aa == pytest.approx(400.0)


def test_newmark_first_step_parameters():
    sch = TimeScheme(dt=0.1)
    av, _, aa, _ = newmark_affine(sch, 0, np.zeros(2), np.zeros(2), np.zeros(2))
    assert av == pytest.approx(2 / 0.1) and aa == pytest.approx(1 / (0.5 * 0.01))


@pytest.mark.parametrize("k", [0, 3])
def test_newmark_constant_displacement_is_at_rest(k):
    sch = TimeScheme(dt=0.05)
    d = np.array([0.3, -1.0])
    av, bv, aa, ba = newmark_affine(sch, k, d, np.zeros(2), np.zeros(2))
    assert np.allclose(av * d + bv, 0) and np.allclose(aa * d + ba, 0)


def test_newmark_integrates_quadratic_exactly():
    # d(t) = t^2 has constant acceleration 2; trapezoidal Newmark reproduces it
    sch = TimeScheme(dt=0.1)
    t0 = 0.3
    d, v, a = np.array([t0 ** 2]), np.array([2 * t0]), np.array([2.0])
    av, bv, aa, ba = newmark_affine(sch, 1, d, v, a)
    d1 = np.array([(t0 + 0.1) ** 2])
    assert np.allclose(av * d1 + bv, 2 * (t0 + 0.1)) and np.allclose(aa * d1 + ba, 2.0)


def test_bdf_coefficients():
    u = np.array([1.0, 2.0])
    um = np.array([0.5, 1.5])
    a1, b1 = bdf_affine(TimeScheme(dt=0.01, bdf_order=1), 5, u, um)
    assert a1 == pytest.approx(100.0) and np.allclose(b1, -100 * u)
    a2, b2 = bdf_affine(TimeScheme(dt=0.01, bdf_order=2), 5, u, um)
    assert a2 == pytest.approx(150.0) and np.allclose(b2, (-4 * u + um) / 0.02)


def test_bdf2_starts_with_bdf1():
    a, _ = bdf_affine(TimeScheme(dt=0.01, bdf_order=2), 0, np.ones(1), None)
    assert a == pytest.approx(100.0)


@pytest.mark.parametrize("order", [1, 2])
def test_bdf_constant_history(order):
    u = np.array([3.0, -2.0])
    a, b = bdf_affine(TimeScheme(dt=0.02, bdf_order=order), 4, u, u)
    assert np.allclose(a * u + b, 0.0)


def test_ale_velocity():
    W = np.vstack([np.eye(2), 0.5 * np.eye(2)])
    assert not np.any(ale_velocity(W, np.zeros(2)))
    assert np.allclose(ale_velocity(W, [1.0, 2.0])[:2], [1.0, 2.0])
    assert ale_velocity(None, [1.0]) is None


def test_scheme_validation():
    with pytest.raises(ValueError):
        TimeScheme(dt=0.0)
    with pytest.raises(ValueError):
        TimeScheme(dt=0.1, bdf_order=3)
    with pytest.warns(UserWarning):
        TimeScheme(dt=0.1, gamma=0.5, beta=0.1)
