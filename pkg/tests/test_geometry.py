import math

import numpy as np
import pytest

import ks_finite._geometry as geometry

X = geometry.Direction(1.0, 0.0, 0.0)
Y = geometry.Direction(0.0, 1.0, 0.0)
Z = geometry.Direction(0.0, 0.0, 1.0)
S = 1 / math.sqrt(2)


@pytest.mark.parametrize(
    ("vector", "expected"),
    [
        ((0, 0, 2), (0, 0, 1)),
        ((0, 0, -1), (0, 0, 1)),
        ((1, 1, 0), (S, S, 0)),
        ((-3, 4, 0), (0.6, -0.8, 0)),
        ((0, -1e-13, -1), (0, 1e-13, 1)),
    ],
)
def test_normalize(vector, expected):
    direction = geometry.normalize(vector)
    assert direction == pytest.approx(expected, abs=1e-15)
    assert math.sqrt(direction.dot(direction)) == pytest.approx(1, abs=1e-12)


def test_normalize_has_no_negative_zero():
    direction = geometry.normalize((-0.0, -0.0, -5.0))
    assert all(math.copysign(1, c) == 1 for c in direction)


def test_normalize_zero_vector():
    with pytest.raises(geometry.ZeroVector) as execinfo:
        geometry.normalize((0, 1e-13, 0))
    assert "Can't normalize" in str(execinfo.value)


@pytest.mark.parametrize(
    "v",
    [
        (math.inf, 0, 0),
        (math.nan, 0, 0),
        (1, -math.inf, 0),
        (0, 0, math.nan),
    ],
)
def test_normalize_non_finite(v):
    with pytest.raises(geometry.NonFiniteVector) as execinfo:
        geometry.normalize(v)
    assert "non-finite" in str(execinfo.value)


def test_normalize_is_idempotent(rng):
    for v in rng.normal(size=(200, 3)):
        once = geometry.normalize(v)
        assert geometry.normalize(once) == once


@pytest.mark.parametrize(
    ("a", "b", "expected"),
    [
        (X, Y, True),
        (X, geometry.normalize((1, 1, 0)), False),
        (geometry.normalize((0, 1, 1)), geometry.normalize((0, 1, -1)), True),
    ],
)
def test_is_orthogonal(a, b, expected):
    assert geometry.is_orthogonal(a, b, 1e-9) is expected


def test_is_orthogonal_negative_tolerance():
    with pytest.raises(ValueError, match="must not be negative"):
        geometry.is_orthogonal(X, Y, -1)


def test_angle_between():
    assert geometry.angle_between(X, Y) == pytest.approx(math.pi / 2)
    assert geometry.angle_between(X, (-1, 0, 0)) == 0
    assert geometry.angle_between(X, (1, 1, 0)) == pytest.approx(math.pi / 4)


def test_jitter_without_sigma(rng):
    assert geometry.jitter(Z, 0, rng) is Z


def test_jitter_is_deterministic():
    first = geometry.jitter(Z, 0.3, np.random.default_rng(7))
    second = geometry.jitter(Z, 0.3, np.random.default_rng(7))
    assert first == second


def test_jitter_matches_jitter_many():
    single = geometry.jitter(X, 0.2, np.random.default_rng(3))
    many = geometry.jitter_many(X, 0.2, np.random.default_rng(3), 1)
    assert single == geometry.normalize(many[0])


def test_jitter_mean_deviation(rng):
    sigma = 0.01
    samples = geometry.jitter_many(Z, sigma, rng, 100_000)
    np.testing.assert_allclose(np.linalg.norm(samples, axis=1), 1, atol=1e-12)

    angles = np.arccos(np.clip(samples @ np.array(Z), -1, 1))
    expected = sigma * math.sqrt(2 / math.pi)
    standard_error = sigma * math.sqrt(1 - 2 / math.pi) / math.sqrt(len(angles))
    assert abs(angles.mean() - expected) < 3 * standard_error


def test_jitter_axis_is_isotropic(rng):
    samples = geometry.jitter_many(Z, 0.5, rng, 100_000)
    # the tilt direction in the x-y plane averages out
    np.testing.assert_allclose(samples[:, :2].mean(axis=0), 0, atol=0.01)


def test_jitter_negative_sigma(rng):
    with pytest.raises(ValueError, match="sigma"):
        geometry.jitter(Z, -0.1, rng)


@pytest.mark.parametrize(
    ("a", "b", "expected"),
    [
        (X, Y, Z),
        (geometry.normalize((0, 1, 1)), X, (0, S, -S)),
    ],
)
def test_cross_complete(a, b, expected):
    assert geometry.cross_complete(a, b) == pytest.approx(expected, abs=1e-15)


def test_cross_complete_parallel():
    with pytest.raises(geometry.DegeneratePair) as execinfo:
        geometry.cross_complete(X, X)
    assert "parallel" in str(execinfo.value)


def test_cross_complete_is_orthogonal(rng):
    for _ in range(500):
        a, b, _ = geometry.random_orthonormal_triad(rng)
        c = geometry.cross_complete(a, b)
        assert abs(c.dot(a)) <= 1e-10
        assert abs(c.dot(b)) <= 1e-10


def test_gram_schmidt_frame_fixed_point():
    assert geometry.gram_schmidt_frame(X, Y, Z) == (X, Y, Z)


def test_gram_schmidt_frame_tilted():
    tilted = geometry.normalize((math.sin(0.1), 0, math.cos(0.1)))
    frame = geometry.gram_schmidt_frame(X, Y, tilted)
    assert frame[0] == X
    assert frame[1] == pytest.approx(Y, abs=1e-12)
    assert frame[2] == pytest.approx(Z, abs=1e-12)


def test_gram_schmidt_frame_degenerate():
    with pytest.raises(geometry.DegenerateFrame):
        geometry.gram_schmidt_frame(X, X, Y)


def test_gram_schmidt_frame_is_orthonormal(rng):
    for _ in range(200):
        a, b, c = (geometry.jitter(d, 0.2, rng) for d in (X, Y, Z))
        frame = np.array(geometry.gram_schmidt_frame(a, b, c))
        np.testing.assert_allclose(frame @ frame.T, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(frame)) == pytest.approx(1, abs=1e-9)


def test_orthonormalize_batch(rng):
    d1, d2, d3 = (geometry.jitter_many(d, 0.3, rng, 100) for d in (X, Y, Z))
    frames = geometry.orthonormalize_batch(d1, d2, d3)
    products = frames @ frames.transpose(0, 2, 1)
    np.testing.assert_allclose(products, np.broadcast_to(np.eye(3), products.shape), atol=1e-12)
    np.testing.assert_allclose(frames[:, 0], d1 / np.linalg.norm(d1, axis=1)[:, None])


def test_random_orthonormal_triad(rng):
    a, b, c = geometry.random_orthonormal_triad(rng)
    for u, v in ((a, b), (a, c), (b, c)):
        assert geometry.is_orthogonal(u, v, 1e-12)
