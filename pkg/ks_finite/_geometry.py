"""Unit vectors in three dimensions.

A `Direction` is a ray: `n` and `-n` describe the same switch position. All
functions return directions in canonical form, where the first component that
isn't zero is positive.
"""

import math
from typing import NamedTuple, Tuple

import numpy as np

ZERO_TOLERANCE = 1e-12
DEFAULT_ORTHOGONALITY_TOLERANCE = 1e-9
DEGENERACY_TOLERANCE = 1e-9
# relative deviation from unit norm, that normalize() accepts without dividing
_UNIT_NORM_SLACK = 1e-15


class Direction(NamedTuple):
    x: float
    y: float
    z: float

    def as_array(self):
        return np.array(self, dtype=float)

    def dot(self, other):
        return self.x * other.x + self.y * other.y + self.z * other.z


Frame = Tuple[Direction, Direction, Direction]


def normalize(v):
    """Scale `v` to unit length and bring it into canonical form.

    Vectors that are already of unit length (up to rounding) are not divided
    again, so `normalize(normalize(v)) == normalize(v)` holds exactly.
    """
    x, y, z = (float(c) for c in v)
    if not all(math.isfinite(c) for c in (x, y, z)):
        raise NonFiniteVector(f"Vector {(x, y, z)} has a non-finite component")
    norm = math.sqrt(x * x + y * y + z * z)
    if not norm > ZERO_TOLERANCE:
        raise ZeroVector(f"Can't normalize vector with norm {norm:g}")

    if abs(norm - 1.0) > _UNIT_NORM_SLACK:
        x, y, z = x / norm, y / norm, z / norm

    return _canonical(x, y, z)


def _canonical(x, y, z):
    for c in (x, y, z):
        if abs(c) > ZERO_TOLERANCE:
            if c < 0:
                x, y, z = -x, -y, -z
            break

    # adding 0.0 turns -0.0 into 0.0
    return Direction(x + 0.0, y + 0.0, z + 0.0)


def is_orthogonal(a, b, tol=DEFAULT_ORTHOGONALITY_TOLERANCE):
    if tol < 0:
        raise ValueError("Tolerance must not be negative")
    return abs(a.dot(b)) <= tol


def angle_between(a, b):
    """Angle between the rays `a` and `b` in [0, pi/2]"""
    cross = np.cross(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return math.atan2(float(np.linalg.norm(cross)), abs(float(np.dot(a, b))))


def same_ray(a, b, tol=DEFAULT_ORTHOGONALITY_TOLERANCE):
    cross = np.cross(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(np.linalg.norm(cross)) <= tol


def perpendicular_basis(n):
    """Two unit vectors spanning the plane orthogonal to `n`"""
    n = np.asarray(n, dtype=float)
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(n)))] = 1.0
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def jitter_many(n, sigma, rng, size):
    """Draw `size` misaligned copies of `n` as a (size, 3) array.

    Each copy is `n` rotated by an angle from Normal(0, sigma**2) about an axis
    drawn uniformly from the plane orthogonal to `n`. The rows are unit
    vectors, but not canonicalized.
    """
    if sigma < 0:
        raise ValueError("sigma must not be negative")

    n = np.asarray(n, dtype=float)
    if sigma == 0:
        return np.tile(n, (size, 1))

    theta = rng.normal(0.0, sigma, size)
    phi = rng.uniform(0.0, 2 * math.pi, size)
    e1, e2 = perpendicular_basis(n)

    # rotating n about an axis u orthogonal to n moves it along u x n, which
    # is again uniformly distributed in the orthogonal plane
    towards = np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2)
    return np.outer(np.cos(theta), n) + towards * np.sin(theta)[:, np.newaxis]


def jitter(n, sigma, rng):
    if sigma == 0:
        return n
    return normalize(jitter_many(n, sigma, rng, 1)[0])


def cross_complete(a, b):
    """Third direction of the triad started by the orthogonal pair `a`, `b`"""
    cross = np.cross(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    norm = float(np.linalg.norm(cross))
    if norm <= DEGENERACY_TOLERANCE:
        raise DegeneratePair(f"Directions {tuple(a)} and {tuple(b)} are parallel")
    return normalize(cross / norm)


def gram_schmidt_frame(a, b, c):
    """Orthonormal frame close to the directions `a`, `b`, `c`.

    The first vector is `a` itself, the second lies in the plane of `a` and
    `b` and the third completes the frame.
    """
    vectors = np.array([a, b, c], dtype=float)
    if abs(np.linalg.det(vectors)) <= DEGENERACY_TOLERANCE:
        raise DegenerateFrame("Directions are linearly dependent")

    first = np.asarray(a, dtype=float)
    second = _orthogonalize(vectors[1], [first])
    third = _orthogonalize(vectors[2], [first, second])
    return (a, normalize(second), normalize(third))


def _orthogonalize(v, basis):
    # two passes of modified Gram-Schmidt keep the residual dot products at
    # rounding level
    for _ in range(2):
        for e in basis:
            v = v - np.dot(v, e) * e
        norm = np.linalg.norm(v)
        if norm <= DEGENERACY_TOLERANCE:
            raise DegenerateFrame("Directions are linearly dependent")
        v = v / norm
    return v


def orthonormalize_batch(d1, d2, d3):
    """Vectorized Gram-Schmidt over (m, 3) arrays, returns (m, 3, 3) frames.

    Row j of each frame is the j-th frame vector.
    """
    q1 = d1 / np.linalg.norm(d1, axis=1, keepdims=True)
    q2 = d2 - np.sum(d2 * q1, axis=1, keepdims=True) * q1
    q2 /= np.linalg.norm(q2, axis=1, keepdims=True)
    q3 = d3 - np.sum(d3 * q1, axis=1, keepdims=True) * q1
    q3 -= np.sum(q3 * q2, axis=1, keepdims=True) * q2
    q3 /= np.linalg.norm(q3, axis=1, keepdims=True)
    return np.stack([q1, q2, q3], axis=1)


def random_orthonormal_triad(rng):
    """Haar-random orthonormal triad"""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    return tuple(normalize(column) for column in q.T)


class ZeroVector(ValueError):
    pass


class NonFiniteVector(ValueError):
    pass


class DegeneratePair(ValueError):
    pass


class DegenerateFrame(ValueError):
    pass
