import numpy as np
import pytest

from chaoslab.torus import min_displacement, torus_distance, wrap


def test_wrap_examples():
    assert wrap(np.array([0.3]))[0] == pytest.approx(0.3)
    assert wrap(np.array([1.25]))[0] == pytest.approx(0.25)
    np.testing.assert_allclose(wrap(np.array([-0.1, 2.0])), [0.9, 0.0], atol=1e-15)


def test_wrap_rejects_nonfinite():
    with pytest.raises(ValueError):
        wrap(np.array([np.nan]))
    with pytest.raises(ValueError):
        wrap(np.array([np.inf, 0.0]))


def test_wrap_idempotent_and_in_range():
    rng = np.random.default_rng(3)
    v = rng.normal(scale=5.0, size=(1000, 2))
    w = wrap(v)
    assert np.all((w >= 0.0) & (w < 1.0))
    np.testing.assert_array_equal(wrap(w), w)
    # tiny negative values must not wrap to exactly 1.0
    assert wrap(np.array([-1e-18]))[0] < 1.0


def test_min_displacement_examples():
    assert min_displacement(np.array([0.1]), np.array([0.9]))[0] == pytest.approx(0.2)
    assert min_displacement(np.array([0.5]), np.array([0.5]))[0] == 0.0
    np.testing.assert_allclose(
        min_displacement(np.array([0.75, 0.0]), np.array([0.0, 0.9])),
        [-0.25, 0.1],
        atol=1e-15,
    )


def test_min_displacement_halfopen_tie():
    # coordinate difference of exactly 1/2 maps to -1/2
    assert min_displacement(np.array([0.5]), np.array([0.0]))[0] == -0.5
    assert min_displacement(np.array([0.0]), np.array([0.5]))[0] == -0.5


def test_min_displacement_antisymmetry_random():
    rng = np.random.default_rng(5)
    x, y = rng.random((2, 500, 2))
    np.testing.assert_allclose(
        min_displacement(x, y), -min_displacement(y, x), atol=1e-15
    )


def test_min_displacement_range():
    rng = np.random.default_rng(8)
    d = min_displacement(rng.random((1000, 2)), rng.random((1000, 2)))
    assert np.all((d >= -0.5) & (d < 0.5))


def test_distance_examples():
    assert torus_distance(np.array([0.1]), np.array([0.9])) == pytest.approx(0.2)
    assert torus_distance(np.array([0.3, 0.4]), np.array([0.3, 0.4])) == 0.0
    assert torus_distance(np.array([0.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(
        np.sqrt(2) / 2
    )


def test_distance_metric_properties():
    rng = np.random.default_rng(13)
    x, y, z = rng.random((3, 200, 2))
    dxy = torus_distance(x, y)
    assert np.all(dxy <= np.sqrt(2) / 2 + 1e-15)
    np.testing.assert_allclose(dxy, torus_distance(y, x), atol=1e-15)
    assert np.all(dxy <= torus_distance(x, z) + torus_distance(z, y) + 1e-12)
    # never exceeds the straight-line distance of any lift
    shifts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
    for s in shifts:
        lifted = np.sqrt(np.sum((x - y + s) ** 2, axis=-1))
        assert np.all(dxy <= lifted + 1e-12)
