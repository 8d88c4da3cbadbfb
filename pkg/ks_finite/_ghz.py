"""Three-particle GHZ contexts: the local hidden-variable analogue of a KS set.

Every particle is measured with the Pauli observable X or Y. The four
contexts XXX, XYY, YXY and YYX have definite parities on the GHZ state, but
no local assignment of +1/-1 values reproduces more than three of them.
"""

import dataclasses
import enum
import itertools
import logging
from typing import Optional, Tuple

import numpy as np

import ks_finite._experiment as experiment
import ks_finite._quantum as quantum
import ks_finite._util as util

logger = logging.getLogger(__name__)

CONTEXT_SETTINGS = ("XXX", "XYY", "YXY", "YYX")
OUTCOMES = tuple(itertools.product((1, -1), repeat=3))
_PARITY_TOLERANCE = 1e-12
# bins count the -1 outcomes of a trial
_SUCCESS_BINS = {1: (0, 2), -1: (1, 3)}


class Setting(enum.Enum):
    X = "X"
    Y = "Y"


_PAULI = {
    Setting.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Setting.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
}


@dataclasses.dataclass(frozen=True)
class GHZContext:
    settings: Tuple[Setting, Setting, Setting]
    target_parity: int

    def __post_init__(self):
        if self.target_parity not in (1, -1):
            raise ValueError(f"Target parity must be +1 or -1: {self.target_parity}")

    @property
    def label(self):
        return "".join(s.value for s in self.settings)


def _column(particle, setting):
    return 2 * particle + (setting is Setting.Y)


@dataclasses.dataclass(frozen=True)
class LHVAssignment:
    """Predetermined results v(particle, setting), ordered 1X, 1Y, 2X, 2Y,
    3X, 3Y"""

    values: Tuple[int, int, int, int, int, int]

    def __post_init__(self):
        if len(self.values) != 6 or any(v not in (1, -1) for v in self.values):  # noqa: PLR2004
            raise ValueError("An LHV assignment needs six values +1 or -1")

    def value(self, particle, setting):
        return self.values[_column(particle, setting)]

    def parity(self, context):
        return int(np.prod([self.value(p, s) for p, s in enumerate(context.settings)]))

    def satisfies(self, context):
        return self.parity(context) == context.target_parity


@dataclasses.dataclass(frozen=True)
class GhzConfig:
    trials_per_context: int
    seed: int
    alpha: float = 0.01
    visibility: float = 1.0
    detection_efficiency: float = 1.0
    no_click_policy: experiment.NoClickPolicy = (
        experiment.NoClickPolicy.COUNT_AS_FAILURE
    )
    # None selects the quantum source
    lhv_model: Optional[Tuple[Tuple[float, LHVAssignment], ...]] = None
    chunk_size: int = 4096

    def __post_init__(self):
        if self.trials_per_context < 1:
            raise experiment.InvalidConfig("trials_per_context must be at least 1")
        if not 0 < self.alpha < 1:
            raise experiment.InvalidConfig("alpha must be within (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise experiment.InvalidConfig("seed must be a 64 bit unsigned integer")
        for name in ("visibility", "detection_efficiency"):
            if not 0 <= getattr(self, name) <= 1:
                raise experiment.InvalidConfig(f"{name} must be within [0, 1]")
        if self.chunk_size < 1:
            raise experiment.InvalidConfig("chunk_size must be at least 1")
        if self.lhv_model is not None:
            weights = [w for w, _ in self.lhv_model]
            if not weights or any(w < 0 for w in weights):
                raise experiment.InvalidConfig("Invalid LHV model weights")
            if abs(sum(weights) - 1) > 1e-12:  # noqa: PLR2004
                raise experiment.InvalidConfig("LHV model weights must sum to 1")

    def to_doc(self):
        doc = {
            "trials_per_context": self.trials_per_context,
            "seed": self.seed,
            "alpha": self.alpha,
            "source": "quantum" if self.lhv_model is None else "lhv",
            "visibility": self.visibility,
            "detection_efficiency": self.detection_efficiency,
            "no_click_policy": self.no_click_policy.value,
            "chunk_size": self.chunk_size,
        }
        if self.lhv_model is not None:
            doc["lhv_model"] = [
                {"weight": w, "values": list(a.values)} for w, a in self.lhv_model
            ]
        return doc


def observable(setting):
    return _PAULI[Setting(setting)]


def ghz_state():
    """(|000> + |111>) / sqrt(2)"""
    psi = np.zeros(8, dtype=complex)
    psi[0] = psi[7] = 1 / np.sqrt(2)
    return psi


def context_operator(settings):
    a, b, c = (observable(s) for s in settings)
    return np.kron(np.kron(a, b), c)


def context_parity(state, context):
    """Expectation value of the product observable of `context`"""
    psi = np.asarray(state, dtype=complex).reshape(-1)
    if psi.shape != (8,):
        raise quantum.InvalidState(f"Expected an 8-vector, got shape {psi.shape}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > _PARITY_TOLERANCE:
        raise quantum.InvalidState(f"State vector has norm {norm}")

    value = np.vdot(psi, context_operator(context.settings) @ psi)
    return float(value.real)


def ghz_contexts():
    """The four GHZ contexts with the parities the GHZ state predicts"""
    psi = ghz_state()
    contexts = []
    for label in CONTEXT_SETTINGS:
        settings = tuple(Setting(s) for s in label)
        value = np.vdot(psi, context_operator(settings) @ psi).real
        if abs(abs(value) - 1) > _PARITY_TOLERANCE:
            raise RuntimeError(f"{label} has no definite parity: {value}")
        contexts.append(GHZContext(settings, 1 if value > 0 else -1))
    return contexts


def lhv_max_satisfiable():
    """Maximum number of contexts a local assignment satisfies, a witness
    and the threshold 1/N the union bound gives for N = 4"""
    contexts = ghz_contexts()
    best, witness = -1, None
    for values in itertools.product((1, -1), repeat=6):
        assignment = LHVAssignment(values)
        satisfied = sum(assignment.satisfies(c) for c in contexts)
        if satisfied > best:
            best, witness = satisfied, assignment
    return best, witness, 1 / len(contexts)


def noisy_ghz_density(visibility):
    psi = ghz_state()
    return visibility * np.outer(psi, psi.conj()) + (1 - visibility) * np.eye(8) / 8


def outcome_probabilities(rho, context):
    """Probabilities of the outcome strings in `OUTCOMES`"""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape == (8,):
        rho = np.outer(rho, rho.conj())
    projectors = {
        (s, sign): (np.eye(2) + sign * _PAULI[s]) / 2
        for s in Setting
        for sign in (1, -1)
    }
    probabilities = []
    for outcome in OUTCOMES:
        a, b, c = (projectors[s, o] for s, o in zip(context.settings, outcome))
        projector = np.kron(np.kron(a, b), c)
        probabilities.append(np.trace(projector @ rho).real)
    return np.clip(np.array(probabilities), 0.0, None)


class _GhzSimulation:
    def __init__(self, config, contexts):
        self._config = config
        self._contexts = contexts
        if config.lhv_model is None:
            rho = noisy_ghz_density(config.visibility)
            self._probabilities = [outcome_probabilities(rho, c) for c in contexts]
        else:
            self._weights = np.array([w for w, _ in config.lhv_model])
            self._values = np.array([a.values for _, a in config.lhv_model])

    def run_chunk(self, context_index, chunk_index, size):
        config = self._config
        context = self._contexts[context_index]
        rng = experiment.chunk_rng(config.seed, 1, context_index, chunk_index)

        if config.lhv_model is None:
            p = self._probabilities[context_index]
            indices = rng.choice(len(OUTCOMES), size=size, p=p / p.sum())
            outcomes = np.array(OUTCOMES)[indices]
        else:
            points = rng.choice(len(self._weights), size=size, p=self._weights)
            columns = [_column(p, s) for p, s in enumerate(context.settings)]
            outcomes = self._values[points][:, columns]

        # +1 -> 0, -1 -> 1
        bits = (1 - outcomes) // 2
        bits = experiment.apply_detection(bits, config.detection_efficiency, rng)
        return experiment.tally(bits, bins=bits.sum(axis=1))


async def run_ghz_experiment_async(config, workers=None):
    contexts = ghz_contexts()
    if workers is None:
        workers = experiment.default_workers()

    simulation = _GhzSimulation(config, contexts)
    sizes = experiment.chunk_sizes(config.trials_per_context, config.chunk_size)
    jobs = [(k, c, s) for k in range(len(contexts)) for c, s in enumerate(sizes)]
    logger.info("Simulating GHZ contexts in %d chunks", len(jobs))

    def job(k, c, size):
        return lambda: simulation.run_chunk(k, c, size)

    results = await util.run_in_threads([job(*j) for j in jobs], max_workers=workers)

    counts = np.zeros((len(contexts), 4), dtype=np.int64)
    no_click = np.zeros(len(contexts), dtype=np.int64)
    for (k, _, _), (chunk_counts, chunk_no_click) in zip(jobs, results):
        counts[k] += chunk_counts
        no_click[k] += chunk_no_click

    alpha_per_context = config.alpha / len(contexts)
    stats = tuple(
        experiment.triad_stats(
            k,
            counts[k],
            no_click[k],
            alpha_per_context,
            config.no_click_policy,
            success_bins=_SUCCESS_BINS[context.target_parity],
            settings=context.label,
            target_parity=context.target_parity,
        )
        for k, context in enumerate(contexts)
    )
    report = experiment.ExperimentReport(
        "ghz",
        "ghz",
        len(contexts),
        config.alpha,
        config.no_click_policy,
        stats,
        trials_per_triad=config.trials_per_context,
        seed=config.seed,
        config_digest=util.digest(config.to_doc()),
    )
    logger.info("GHZ verdict: %s (u_max=%g)", report.verdict, report.u_max)
    return report


def run_ghz_experiment(config, workers=None):
    return util.run(run_ghz_experiment_async(config, workers))


def config_from_doc(doc):
    lhv_model = None
    if doc.source == "lhv":
        try:
            lhv_model = tuple(
                (p.weight, LHVAssignment(tuple(p.values))) for p in doc.lhv_model
            )
        except ValueError as e:
            raise experiment.InvalidConfig(f"Invalid LHV model: {e}") from e

    return GhzConfig(
        doc.trials_per_context,
        doc.seed,
        doc.alpha,
        doc.visibility,
        doc.detection_efficiency,
        experiment.NoClickPolicy(doc.no_click_policy),
        lhv_model,
        doc.chunk_size,
    )
