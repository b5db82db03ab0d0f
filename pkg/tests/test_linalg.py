import numpy as np
import pytest
import scipy.linalg

from dtcfloquet.linalg import expm_small, ordered_product


@pytest.mark.parametrize("scale", [1e-6, 1e-2, 0.3, 1.0, 5.0, 40.0])
def test_expm_matches_scipy(scale):
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = scale * rng.standard_normal((3, 3))
        ref = scipy.linalg.expm(a)
        err = np.linalg.norm(expm_small(a) - ref) / np.linalg.norm(ref)
        # squaring amplifies rounding in proportion to the norm
        assert err < 1e-13 * max(1.0, np.linalg.norm(a, 1))


def test_expm_rotation_generator():
    th = 0.7
    a = np.array([[0.0, -th, 0.0], [th, 0.0, 0.0], [0.0, 0.0, 0.0]])
    expected = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    np.testing.assert_allclose(expm_small(a), expected, atol=1e-15)


def test_expm_zero_is_identity():
    np.testing.assert_array_equal(expm_small(np.zeros((3, 3))), np.eye(3))


def test_ordered_product_time_order():
    rng = np.random.default_rng(3)
    mats = rng.standard_normal((4, 3, 3))
    dt = 0.1
    expected = np.eye(3)
    for m in mats:
        expected = scipy.linalg.expm(m * dt) @ expected
    np.testing.assert_allclose(ordered_product(mats, dt), expected, rtol=1e-13, atol=1e-14)


def test_ordered_product_commuting_equals_single_exponential():
    m = np.diag([0.3, -1.0, 0.1])
    mats = np.repeat(m[None], 64, axis=0)
    np.testing.assert_allclose(ordered_product(mats, 0.05), scipy.linalg.expm(m * 3.2),
                               rtol=1e-13)
