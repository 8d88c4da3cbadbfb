"""Spin-1 quantum mechanics in the Cartesian representation.

States live in C^3 with the basis vectors x, y, z. The spin component along a
real unit vector n is S_n = n . (S_x, S_y, S_z) and its square is
S_n^2 = I - n n^T, so the result 0 of a squared spin measurement along n
projects onto n itself.
"""

import dataclasses
import itertools
from typing import NamedTuple, Optional, Tuple

import numpy as np

import ks_finite._geometry as geometry

NO_CLICK = -1
STATE_TOLERANCE = 1e-12
EIGENVALUE_TOLERANCE = 1e-10
# branches below this probability are not descended
ZERO_BRANCH_PROBABILITY = 1e-14
PATTERNS = tuple(itertools.product((0, 1), repeat=3))
IDENTITY = np.eye(3)

_LEVI_CIVITA = np.zeros((3, 3, 3))
for _k, _l, _m in itertools.permutations(range(3)):
    _LEVI_CIVITA[_k, _l, _m] = np.linalg.det(IDENTITY[[_k, _l, _m]])


@dataclasses.dataclass(frozen=True)
class QState:
    """Spin-1 state, either pure (`vector` set) or mixed"""

    rho: np.ndarray
    vector: Optional[np.ndarray] = None

    @property
    def is_pure(self):
        return self.vector is not None

    def density(self):
        return self.rho


class MeasurementRecord(NamedTuple):
    triad_index: int
    results: Tuple[int, int, int]

    @property
    def sum(self):
        """Sum of the results, None if a detector didn't click"""
        if NO_CLICK in self.results:
            return None
        return sum(self.results)


def pure_state(vector):
    psi = np.asarray(vector, dtype=complex).reshape(-1)
    if psi.shape != (3,):
        raise InvalidState(f"Expected a 3-vector, got shape {psi.shape}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > STATE_TOLERANCE:
        raise InvalidState(f"State vector has norm {norm}")
    psi.setflags(write=False)
    rho = np.outer(psi, psi.conj())
    rho.setflags(write=False)
    return QState(rho, psi)


def mixed_state(matrix):
    rho = np.array(matrix, dtype=complex)
    if rho.shape != (3, 3):
        raise InvalidState(f"Expected a 3x3 matrix, got shape {rho.shape}")
    _check_density(rho)
    rho.setflags(write=False)
    return QState(rho)


def maximally_mixed():
    return mixed_state(IDENTITY / 3)


def random_pure_state(rng):
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    return pure_state(psi / np.linalg.norm(psi))


def _check_density(rho):
    if not np.allclose(rho, rho.conj().T, rtol=0, atol=STATE_TOLERANCE):
        raise InvalidState("Density matrix is not Hermitian")
    trace = np.trace(rho).real
    if abs(trace - 1.0) > STATE_TOLERANCE:
        raise InvalidState(f"Density matrix has trace {trace}")
    smallest = np.linalg.eigvalsh(rho).min()
    if smallest < -EIGENVALUE_TOLERANCE:
        raise InvalidState(f"Density matrix has negative eigenvalue {smallest}")


def _checked_rho(state):
    if not isinstance(state, QState):
        raise InvalidState(f"Expected a QState, got {type(state).__name__}")
    if state.vector is not None:
        norm = np.linalg.norm(state.vector)
        if abs(norm - 1.0) > STATE_TOLERANCE:
            raise InvalidState(f"State vector has norm {norm}")
    else:
        _check_density(state.rho)
    return state.rho


def spin_operators():
    """S_x, S_y, S_z with (S_k)_lm = -i epsilon_klm"""
    return tuple(-1j * _LEVI_CIVITA[k] for k in range(3))


def spin_component(n):
    return np.einsum("k,klm->lm", np.asarray(n, dtype=float), -1j * _LEVI_CIVITA)


def spin_square(n):
    s = spin_component(n)
    return s @ s


def zero_projector(n):
    """Projector onto the eigenspace of S_n^2 with eigenvalue 0"""
    n = np.asarray(n, dtype=float)
    return np.outer(n, n)


def branch_probabilities(state, d1, d2, d3):
    """Probabilities of the eight result patterns of three sequential
    squared-spin measurements along `d1`, `d2` and `d3`.

    Every measurement projects the state onto its outcome and renormalizes.
    The result is a dict mapping (r1, r2, r3) to its probability.
    """
    rho = _checked_rho(state)
    projectors = [zero_projector(d) for d in (d1, d2, d3)]
    probabilities = dict.fromkeys(PATTERNS, 0.0)

    def descend(rho, level, prefix, weight):
        if level == 3:  # noqa: PLR2004
            probabilities[prefix] = weight
            return
        zero = projectors[level]
        for result, projector in ((0, zero), (1, IDENTITY - zero)):
            branch = projector @ rho @ projector
            p = float(np.trace(branch).real)
            if p <= ZERO_BRANCH_PROBABILITY:
                continue
            descend(branch / p, level + 1, (*prefix, result), weight * p)

    descend(rho, 0, (), 1.0)
    return probabilities


def sum_distribution(probabilities):
    """Probabilities of the result sums 0 to 3"""
    sums = [0.0] * 4
    for pattern, p in probabilities.items():
        sums[sum(pattern)] += p
    return sums


def failure_probability(state, d1, d2, d3):
    return 1.0 - sum_distribution(branch_probabilities(state, d1, d2, d3))[2]


def branch_probabilities_batch(rho, d1, d2, d3):
    """Vectorized `branch_probabilities` for (m, 3) direction arrays.

    `rho` is a single (3, 3) density matrix or one per row (m, 3, 3). The
    result has shape (m, 8), columns ordered like `PATTERNS`. Sequential
    projective measurements give the pattern (r1, r2, r3) the probability
    tr(K rho K^dagger) with K = P3 P2 P1.
    """
    m = d1.shape[0]
    stacks = []
    for d in (d1, d2, d3):
        zero = np.einsum("mi,mj->mij", d, d)
        stacks.append(np.stack([zero, IDENTITY - zero], axis=1))
    first, second, third = stacks

    # (m, r2, r1, 3, 3)
    k21 = second[:, :, np.newaxis] @ first[:, np.newaxis, :]
    # (m, r3, r2, r1, 3, 3)
    k321 = third[:, :, np.newaxis, np.newaxis] @ k21[:, np.newaxis]

    rho = np.broadcast_to(rho, (m, 3, 3))
    p = np.einsum("mcbaij,mjk,mcbaik->mabc", k321, rho, k321.conj()).real
    return np.clip(p.reshape(m, 8), 0.0, None)


def joint_probabilities_batch(rho, frames):
    """Probability of the 0 result at frame vector j, shape (m, 3)"""
    m = frames.shape[0]
    rho = np.broadcast_to(rho, (m, 3, 3))
    p = np.einsum("mji,mik,mjk->mj", frames, rho, frames).real
    return np.clip(p, 0.0, None)


def sample_indices(probabilities, rng):
    """Draw one column index per row of `probabilities`"""
    cumulative = np.cumsum(probabilities, axis=1)
    cumulative /= cumulative[:, -1:]
    u = rng.random(probabilities.shape[0])
    indices = np.count_nonzero(cumulative <= u[:, np.newaxis], axis=1)
    return np.minimum(indices, probabilities.shape[1] - 1)


def sequential_measure(state, d1, d2, d3, rng, triad_index=0):
    probabilities = branch_probabilities(state, d1, d2, d3)
    row = np.array([[probabilities[pattern] for pattern in PATTERNS]])
    pattern = PATTERNS[int(sample_indices(row, rng)[0])]
    return MeasurementRecord(triad_index, pattern)


def joint_measure(state, frame, rng, triad_index=0):
    """Measure all three squared spins at once in the orthonormal `frame`.

    Exactly one frame vector yields 0, so the sum is always 2.
    """
    rho = _checked_rho(state)
    vectors = np.array(frame, dtype=float)
    if not np.allclose(vectors @ vectors.T, IDENTITY, rtol=0, atol=1e-9):
        raise geometry.DegenerateFrame("Frame is not orthonormal")

    probabilities = joint_probabilities_batch(rho, vectors[np.newaxis])
    j = int(sample_indices(probabilities, rng)[0])
    results = tuple(0 if i == j else 1 for i in range(3))
    return MeasurementRecord(triad_index, results)


def depolarize(state, p):
    """Mix `state` with white noise: rho -> (1 - p) rho + p I / 3"""
    if not 0 <= p <= 1:
        raise ValueError(f"Depolarizing probability {p} is outside of [0, 1]")
    rho = _checked_rho(state)
    return mixed_state((1 - p) * rho + p * IDENTITY / 3)


class InvalidState(ValueError):
    pass
