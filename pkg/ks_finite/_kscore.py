"""Kochen-Specker sets of triads and their (un)colorability.

A coloring assigns 0 or 1 to every direction, such that every triad has
exactly one 0. Sets that can't be colored rule out non-contextual hidden
variables, as soon as every triad shows a sum of 2 in more than a fraction
1 - 1/N of all runs.
"""

import collections.abc
import dataclasses
import enum
import functools
import itertools
import logging
import math
import time
from typing import Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

import ks_finite._geometry as geometry

logger = logging.getLogger(__name__)

PERES_SEEDS = (
    (0.0, 0.0, 1.0),
    (0.0, 1.0, 1.0),
    (0.0, 1.0, math.sqrt(2)),
    (1.0, 1.0, math.sqrt(2)),
)
PERES_RAY_COUNT = 33
WEIGHT_TOLERANCE = 1e-12


class Triad(NamedTuple):
    i: int
    j: int
    k: int


@dataclasses.dataclass(frozen=True)
class KSSet:
    name: str
    tolerance: float
    directions: Tuple[geometry.Direction, ...]
    triads: Tuple[Triad, ...]

    @property
    def N(self):  # noqa: N802
        return len(self.triads)

    def degrees(self):
        """Number of triads every direction is a member of"""
        degrees = [0] * len(self.directions)
        for triad in self.triads:
            for index in triad:
                degrees[index] += 1
        return degrees


class Assignment(collections.abc.Mapping):
    """Value 0 or 1 for each direction index of a set"""

    def __init__(self, values):
        self._values = tuple(int(v) for v in values)
        if any(v not in (0, 1) for v in self._values):
            raise ValueError("Assignment values must be 0 or 1")

    def __getitem__(self, index):
        if not isinstance(index, int) or not 0 <= index < len(self._values):
            raise KeyError(index)
        return self._values[index]

    def __iter__(self):
        return iter(range(len(self._values)))

    def __len__(self):
        return len(self._values)

    def __eq__(self, other):
        if isinstance(other, Assignment):
            return self._values == other._values
        return super().__eq__(other)

    def __hash__(self):
        return hash(self._values)

    def __repr__(self):
        return f"Assignment({list(self._values)})"

    @property
    def values_tuple(self):
        return self._values


class Status(enum.Enum):
    COLORABLE = "Colorable"
    UNCOLORABLE = "Uncolorable"


@dataclasses.dataclass(frozen=True)
class ColorabilityReport:
    status: Status
    witness: Optional[Assignment]
    nodes_explored: int
    elapsed: float

    @property
    def colorable(self):
        return self.status is Status.COLORABLE


@dataclasses.dataclass(frozen=True)
class HVModel:
    """Finite non-contextual hidden-variable model.

    Every point stands for a pair of system and apparatus hidden variables
    and carries its probability and the predetermined value of every switch
    position.
    """

    points: Tuple[Tuple[float, Mapping[int, int]], ...]

    def __post_init__(self):
        weights = [w for w, _ in self.points]
        if not weights:
            raise ValueError("Model needs at least one point")
        if any(w < 0 for w in weights):
            raise ValueError("Weights must not be negative")
        if abs(math.fsum(weights) - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError("Weights must sum to 1")

    @property
    def weights(self):
        """Point weights, rescaled to sum to 1"""
        weights = np.array([w for w, _ in self.points], dtype=float)
        return weights / math.fsum(weights)

    def value_matrix(self, num_directions):
        """Values as a (points, directions) array"""
        matrix = np.empty((len(self.points), num_directions), dtype=np.int8)
        for p, (_, values) in enumerate(self.points):
            for index in range(num_directions):
                value = values.get(index)
                if value is None:
                    raise IncompleteModel(
                        f"Point {p} doesn't assign a value to direction {index}"
                    )
                if value not in (0, 1):
                    raise IncompleteModel(
                        f"Point {p} assigns {value!r} to direction {index}"
                    )
                matrix[p, index] = value
        return matrix


@dataclasses.dataclass(frozen=True)
class ContextualModel:
    """Hidden-variable model whose values depend on the measured triad.

    `zero_position[k]` holds the probabilities, that the 0 of triad `k` shows
    up at the first, second or third switch. Such a model always satisfies
    the sum rule.
    """

    zero_position: Tuple[Tuple[float, float, float], ...]

    def __post_init__(self):
        for k, probabilities in enumerate(self.zero_position):
            if len(probabilities) != 3 or any(p < 0 for p in probabilities):
                raise ValueError(f"Invalid probabilities for triad {k}")
            if abs(math.fsum(probabilities) - 1.0) > WEIGHT_TOLERANCE:
                raise ValueError(f"Probabilities for triad {k} must sum to 1")

    @classmethod
    def uniform(cls, num_triads):
        return cls(((1 / 3, 1 / 3, 1 / 3),) * num_triads)


def make_ks_set(
    name, directions, triads=None, tolerance=geometry.DEFAULT_ORTHOGONALITY_TOLERANCE
):
    """Validate the parts of a KS set and put them into canonical form.

    Directions are normalized. Without `triads` all orthogonal triples are
    used. Raises `InvalidSet` with the offending direction or triad.
    """
    if not tolerance >= 0:
        raise InvalidSet("Tolerance must not be negative")

    try:
        directions = tuple(geometry.normalize(d) for d in directions)
    except (geometry.ZeroVector, geometry.NonFiniteVector) as e:
        raise InvalidSet(str(e)) from e

    for i, j in itertools.combinations(range(len(directions)), 2):
        if geometry.same_ray(directions[i], directions[j], tolerance):
            raise InvalidSet(f"Directions {i} and {j} are the same ray")

    if triads is None:
        triads = find_triads(directions, tolerance)
    else:
        triads = [_check_triad(t, directions, tolerance) for t in triads]
        duplicates = [t for t, n in collections.Counter(triads).items() if n > 1]
        if duplicates:
            raise InvalidSet(
                f"Triad {list(duplicates[0])} is listed more than once",
                triad=duplicates[0],
            )
        triads.sort()

    if not triads:
        raise InvalidSet(f"Set {name!r} doesn't contain any triad")

    return KSSet(name, float(tolerance), directions, tuple(triads))


def _check_triad(triad, directions, tolerance):
    indices = tuple(triad)
    if len(indices) != 3 or len(set(indices)) != 3:
        raise InvalidSet(
            f"Triad {list(indices)} needs three distinct indices", triad=indices
        )
    for index in indices:
        if not isinstance(index, (int, np.integer)) or not (
            0 <= index < len(directions)
        ):
            raise InvalidSet(
                f"Triad {list(indices)} refers to unknown direction {index}",
                triad=indices,
            )
    for a, b in itertools.combinations(indices, 2):
        if not geometry.is_orthogonal(directions[a], directions[b], tolerance):
            raise InvalidSet(
                f"Triad {list(indices)}: directions {a} and {b} are not orthogonal",
                triad=indices,
            )
    return Triad(*sorted(int(i) for i in indices))


def find_triads(directions, tol=geometry.DEFAULT_ORTHOGONALITY_TOLERANCE):
    """All index triples of pairwise orthogonal directions, sorted"""
    if len(directions) < 3:
        return []

    orthogonal = _orthogonal_pairs(directions, tol)
    triads = []
    n = len(directions)
    for i in range(n):
        for j in range(i + 1, n):
            if not orthogonal[i, j]:
                continue
            for k in range(j + 1, n):
                if orthogonal[i, k] and orthogonal[j, k]:
                    triads.append(Triad(i, j, k))
    return triads


def _orthogonal_pairs(directions, tol):
    matrix = np.array(directions, dtype=float).reshape(-1, 3)
    return np.abs(matrix @ matrix.T) <= tol


def shared_directions(ks_set):
    """Directions that are part of more than one triad"""
    return [i for i, degree in enumerate(ks_set.degrees()) if degree >= 2]


def triad_complete(ks_set, max_rounds=16):
    """Add a third direction to every orthogonal pair outside of a triad.

    Afterwards the "not both 0" constraint of every orthogonal pair is
    implied by a triad. New directions can form new orthogonal pairs, so the
    completion is repeated until there are none left.
    """
    tol = ks_set.tolerance
    directions = list(ks_set.directions)
    triads = set(ks_set.triads)

    for round_ in itertools.count():
        covered = {
            pair for triad in triads for pair in itertools.combinations(triad, 2)
        }
        orthogonal = _orthogonal_pairs(directions, tol)
        uncovered = [
            (i, j)
            for i, j in itertools.combinations(range(len(directions)), 2)
            if orthogonal[i, j] and (i, j) not in covered
        ]
        if not uncovered:
            break
        if round_ == max_rounds:
            raise CompletionDiverged(
                f"Completion of {ks_set.name!r} didn't finish after {max_rounds} rounds"
            )

        logger.debug(
            "Completion round %d: %d uncovered pairs", round_ + 1, len(uncovered)
        )
        for i, j in uncovered:
            third = geometry.cross_complete(directions[i], directions[j])
            k = _find_ray(directions, third, tol)
            if k is None:
                k = len(directions)
                directions.append(third)
            triads.add(Triad(*sorted((i, j, k))))

    if len(triads) == ks_set.N:
        return ks_set

    logger.info(
        "Completed %s: %d -> %d directions, %d -> %d triads",
        ks_set.name,
        len(ks_set.directions),
        len(directions),
        ks_set.N,
        len(triads),
    )
    return KSSet(
        f"{ks_set.name}-completed", tol, tuple(directions), tuple(sorted(triads))
    )


def _find_ray(directions, ray, tol):
    for index, direction in enumerate(directions):
        if geometry.same_ray(direction, ray, tol):
            return index
    return None


@functools.lru_cache(maxsize=None)
def generate_peres_directions():
    """The 33 rays built from the components 0, 1 and sqrt(2)"""
    rays = []
    for seed in PERES_SEEDS:
        for permutation in itertools.permutations(range(3)):
            for signs in itertools.product((1, -1), repeat=3):
                v = [signs[p] * seed[permutation[p]] for p in range(3)]
                ray = geometry.normalize(v)
                if _find_ray(rays, ray, geometry.DEFAULT_ORTHOGONALITY_TOLERANCE) is None:
                    rays.append(ray)

    if len(rays) != PERES_RAY_COUNT:
        raise RuntimeError(
            f"Expected {PERES_RAY_COUNT} Peres rays, generated {len(rays)}"
        )
    return tuple(rays)


def peres_set(complete=False):
    ks_set = make_ks_set("peres-33", generate_peres_directions())
    if complete:
        ks_set = triad_complete(ks_set)
    return ks_set


def verify_assignment(ks_set, assignment):
    """Indices of the triads without exactly one 0"""
    return [
        k
        for k, triad in enumerate(ks_set.triads)
        if sum(1 for index in triad if assignment[index] == 0) != 1
    ]


class _TriadSearch:
    """Depth-first search for assignments violating at most `budget` triads.

    Directions are branched on in order of decreasing triad membership and
    forced values are propagated: a 0 in a triad forces the other two to 1,
    two 1s force the third to 0. A triad may be given up ("relaxed") instead
    of propagating it, which costs one unit of the budget. With a budget of 0
    this is a complete colorability search.
    """

    def __init__(self, ks_set):
        self._triads = ks_set.triads
        degrees = ks_set.degrees()
        self._order = sorted(range(len(degrees)), key=lambda i: (-degrees[i], i))
        self._values = [-1] * len(degrees)
        self._relaxed = [False] * len(self._triads)
        self.nodes = 0

    def search(self, budget):
        self._values = [-1] * len(self._values)
        self._relaxed = [False] * len(self._triads)
        self._budget = budget
        if self._solve(0):
            return Assignment(self._values)
        return None

    def _solve(self, cost):
        self.nodes += 1
        kind, triad_index, var, value = self._find_pending()

        if kind == "conflict":
            if cost >= self._budget:
                return False
            return self._relax(triad_index, cost)

        if kind == "force":
            if self._try(var, value, cost):
                return True
            return cost < self._budget and self._relax(triad_index, cost)

        var = self._next_unassigned()
        if var is None:
            return True

        for value in (0, 1):
            if self._try(var, value, cost):
                return True
        return False

    def _try(self, var, value, cost):
        self._values[var] = value
        if self._solve(cost):
            return True
        self._values[var] = -1
        return False

    def _relax(self, triad_index, cost):
        self._relaxed[triad_index] = True
        if self._solve(cost + 1):
            return True
        self._relaxed[triad_index] = False
        return False

    def _find_pending(self):
        force = None
        values = self._values
        relaxed = self._relaxed
        for t, (i, j, k) in enumerate(self._triads):
            if relaxed[t]:
                continue
            members = (values[i], values[j], values[k])
            zeros = members.count(0)
            ones = members.count(1)
            if zeros >= 2 or ones == 3:  # noqa: PLR2004
                return "conflict", t, None, None
            if force is None and zeros + ones < 3:  # noqa: PLR2004
                if zeros == 1:
                    force = ("force", t, (i, j, k)[members.index(-1)], 1)
                elif ones == 2:  # noqa: PLR2004
                    force = ("force", t, (i, j, k)[members.index(-1)], 0)
        return force or ("branch", None, None, None)

    def _next_unassigned(self):
        for var in self._order:
            if self._values[var] == -1:
                return var
        return None


def is_colorable(ks_set):
    start = time.perf_counter()
    search = _TriadSearch(ks_set)
    witness = search.search(budget=0)
    elapsed = time.perf_counter() - start

    if witness is not None:
        violated = verify_assignment(ks_set, witness)
        if violated:
            raise RuntimeError(f"Solver returned a witness violating {violated}")
        status = Status.COLORABLE
    else:
        status = Status.UNCOLORABLE

    logger.info(
        "%s is %s (%d nodes, %.3f s)",
        ks_set.name,
        status.value,
        search.nodes,
        elapsed,
    )
    return ColorabilityReport(status, witness, search.nodes, elapsed)


def is_colorable_clauses(ks_set):
    """Independent colorability check with a clause encoding solved by z3.

    A Boolean per direction is true, if the value is 0. Every triad needs at
    least one true literal and no two true literals.
    """
    try:
        import z3
    except ImportError as e:
        raise RuntimeError(
            "The clause cross-check needs z3-solver, which isn't installed"
        ) from e

    is_zero = [z3.Bool(f"zero_{i}") for i in range(len(ks_set.directions))]
    solver = z3.Solver()
    for triad in ks_set.triads:
        solver.add(z3.Or([is_zero[i] for i in triad]))
        for a, b in itertools.combinations(triad, 2):
            solver.add(z3.Or(z3.Not(is_zero[a]), z3.Not(is_zero[b])))

    result = solver.check()
    if result == z3.unknown:
        raise RuntimeError(f"z3 couldn't decide: {solver.reason_unknown()}")
    return result == z3.sat


def min_violated_triads(ks_set):
    """Minimum number of triads without exactly one 0 over all assignments.

    The first descent of the search yields an incumbent. Budgets below it
    are then tried in increasing order; the first feasible budget is the
    minimum, otherwise the incumbent is.
    """
    return min_violated_assignment(ks_set)[0]


def min_violated_assignment(ks_set):
    search = _TriadSearch(ks_set)
    incumbent = search.search(budget=ks_set.N)
    best = len(verify_assignment(ks_set, incumbent))
    logger.debug("Incumbent for %s violates %d triads", ks_set.name, best)

    for budget in range(best):
        assignment = search.search(budget=budget)
        if assignment is not None:
            best = len(verify_assignment(ks_set, assignment))
            incumbent = assignment
            break

    logger.info(
        "%s: at least %d violated triads (%d nodes)", ks_set.name, best, search.nodes
    )
    return best, incumbent


def epsilon_threshold(ks_set, report=None):
    """Failure rate per triad below which non-contextuality is excluded"""
    if report is None:
        report = is_colorable(ks_set)
    if report.colorable:
        raise ColorableSet(
            f"{ks_set.name!r} can be colored, so it excludes no hidden variables"
        )
    return 1.0 / ks_set.N


def union_bound_lower(eps_per_triad: Sequence[float]):
    """Lower bound on the measure of the hidden variables satisfying all
    triads, if triad k fails with probability eps_k"""
    for eps in eps_per_triad:
        if not 0 <= eps <= 1:
            raise ValueError(f"Failure probability {eps} is outside of [0, 1]")
    return max(0.0, 1.0 - math.fsum(eps_per_triad))


def nchv_failure_probs(model, ks_set):
    """Probability weight of the points violating each triad"""
    values = model.value_matrix(len(ks_set.directions))
    weights = model.weights
    probabilities = []
    for triad in ks_set.triads:
        zeros = np.count_nonzero(values[:, list(triad)] == 0, axis=1)
        # rounding may push a partial sum above 1
        probabilities.append(min(1.0, math.fsum(weights[zeros != 1])))
    return probabilities


def exact_intersection_measure(model, ks_set):
    """Probability weight of the points satisfying every triad"""
    values = model.value_matrix(len(ks_set.directions))
    satisfied = np.ones(len(model.points), dtype=bool)
    for triad in ks_set.triads:
        satisfied &= np.count_nonzero(values[:, list(triad)] == 0, axis=1) == 1
    return min(1.0, math.fsum(model.weights[satisfied]))


def random_hv_model(ks_set, points, rng):
    weights = rng.dirichlet(np.ones(points))
    weights = weights / math.fsum(weights)
    values = rng.integers(0, 2, size=(points, len(ks_set.directions)))
    return HVModel(
        tuple((float(w), Assignment(row)) for w, row in zip(weights, values))
    )


def min_trials_for_exclusion(num_triads, alpha):
    """Trials per triad needed to exclude non-contextuality without failures.

    With 0 failures in n trials the one-sided upper bound at level alpha/N is
    1 - (alpha/N)**(1/n), which is below 1/N for n > ln(alpha/N) / ln(1 - 1/N).
    """
    if num_triads < 1 or not 0 < alpha < 1:
        raise ValueError("Need at least one triad and 0 < alpha < 1")
    if num_triads == 1:
        return 1
    bound = math.log(alpha / num_triads) / math.log1p(-1 / num_triads)
    return math.floor(bound) + 1


def ks_set_to_doc(ks_set):
    return {
        "name": ks_set.name,
        "tolerance": ks_set.tolerance,
        "directions": [list(d) for d in ks_set.directions],
        "triads": [list(t) for t in ks_set.triads],
    }


def ks_set_from_doc(doc):
    return make_ks_set(
        doc["name"],
        doc["directions"],
        doc.get("triads"),
        doc.get("tolerance", geometry.DEFAULT_ORTHOGONALITY_TOLERANCE),
    )


class InvalidSet(ValueError):
    def __init__(self, message, triad=None):
        super().__init__(message)
        self.triad = triad


class ColorableSet(ValueError):
    pass


class IncompleteModel(ValueError):
    pass


class CompletionDiverged(ArithmeticError):
    pass
