"""Monte Carlo experiment on a KS set and the statistics deciding, whether
non-contextual hidden variables are excluded.

Trials are split into chunks of `chunk_size`. Every chunk draws from its own
random stream derived from (seed, triad, chunk), so the counts don't depend
on how many workers process the chunks.
"""

import csv
import dataclasses
import enum
import io
import logging
import os
import pathlib
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.optimize
import scipy.special

import ks_finite._geometry as geometry
import ks_finite._kscore as kscore
import ks_finite._quantum as quantum
import ks_finite._util as util

logger = logging.getLogger(__name__)

CSV_FIELDS = ("trial", "triad", "r1", "r2", "r3")
SUCCESS_SUM = 2
# spawn keys of the random streams, trial streams append (triad, chunk)
_MODEL_STREAM = 0
_TRIAL_STREAM = 1


class NoClickPolicy(enum.Enum):
    COUNT_AS_FAILURE = "CountAsFailure"
    DISCARD = "Discard"


class Verdict(enum.Enum):
    EXCLUDED = "Excluded"
    INCONCLUSIVE = "Inconclusive"


class MeasurementModel(enum.Enum):
    SEQUENTIAL = "sequential"
    JOINT = "joint"


@dataclasses.dataclass(frozen=True)
class NoiseModel:
    jitter_sigma: float = 0.0
    detection_efficiency: float = 1.0
    no_click_policy: NoClickPolicy = NoClickPolicy.COUNT_AS_FAILURE
    depolarizing_p: float = 0.0

    def __post_init__(self):
        if not self.jitter_sigma >= 0:
            raise InvalidConfig("jitter_sigma must not be negative")
        for name in ("detection_efficiency", "depolarizing_p"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidConfig(f"{name} must be within [0, 1]")


@dataclasses.dataclass(frozen=True)
class StateSpec:
    """State emitted by the source: "maximally-mixed", "pure" or
    "random-per-trial" (a Haar-random pure state for every trial)"""

    kind: str = "maximally-mixed"
    state: Optional[quantum.QState] = None

    def __post_init__(self):
        if self.kind not in ("maximally-mixed", "pure", "random-per-trial"):
            raise InvalidConfig(f"Unknown state kind {self.kind!r}")
        if (self.kind == "pure") != (self.state is not None):
            raise InvalidConfig("A state is required for, and only for, pure states")


@dataclasses.dataclass(frozen=True)
class Quantum:
    model: MeasurementModel = MeasurementModel.SEQUENTIAL


@dataclasses.dataclass(frozen=True)
class HiddenVariable:
    model: kscore.HVModel


@dataclasses.dataclass(frozen=True)
class Contextual:
    model: kscore.ContextualModel


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    ks_set: kscore.KSSet
    trials_per_triad: int
    seed: int
    alpha: float = 0.01
    state: StateSpec = StateSpec()
    noise: NoiseModel = NoiseModel()
    source: object = Quantum()
    verdict: bool = True
    chunk_size: int = 4096

    def __post_init__(self):
        if self.trials_per_triad < 1:
            raise InvalidConfig("trials_per_triad must be at least 1")
        if not 0 < self.alpha < 1:
            raise InvalidConfig("alpha must be within (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be a 64 bit unsigned integer")
        if self.chunk_size < 1:
            raise InvalidConfig("chunk_size must be at least 1")
        if not isinstance(self.source, (Quantum, HiddenVariable, Contextual)):
            raise InvalidConfig(f"Unknown source {self.source!r}")
        if (
            isinstance(self.source, Contextual)
            and len(self.source.model.zero_position) != self.ks_set.N
        ):
            raise InvalidConfig("Contextual model needs one entry per triad")

    def to_doc(self):
        """Canonical description, the config digest is computed from"""
        state = {"kind": self.state.kind}
        if self.state.state is not None:
            state["vector"] = [[z.real, z.imag] for z in self.state.state.vector]

        if isinstance(self.source, Quantum):
            source = {"kind": "quantum", "model": self.source.model.value}
        elif isinstance(self.source, HiddenVariable):
            source = {
                "kind": "hidden-variable",
                "hv_model": {
                    "points": [
                        {"weight": w, "values": [v[i] for i in range(len(v))]}
                        for w, v in self.source.model.points
                    ]
                },
            }
        else:
            source = {
                "kind": "contextual",
                "contextual_model": {
                    "zero_position": [list(p) for p in self.source.model.zero_position]
                },
            }

        return {
            "set": kscore.ks_set_to_doc(self.ks_set),
            "trials_per_triad": self.trials_per_triad,
            "seed": self.seed,
            "alpha": self.alpha,
            "state": state,
            "noise": {
                "jitter_sigma": self.noise.jitter_sigma,
                "detection_efficiency": self.noise.detection_efficiency,
                "no_click_policy": self.noise.no_click_policy.value,
                "depolarizing_p": self.noise.depolarizing_p,
            },
            "source": source,
            "verdict": self.verdict,
            "chunk_size": self.chunk_size,
        }

    def digest(self):
        return util.digest(self.to_doc())


@dataclasses.dataclass(frozen=True)
class TriadStats:
    index: int
    counts: Tuple[int, int, int, int]
    no_click: int
    failures: int
    denominator: int
    epsilon_hat: float
    upper_bound: float
    members: Optional[Tuple[int, ...]] = None
    settings: Optional[str] = None
    target_parity: Optional[int] = None

    @property
    def trials(self):
        return sum(self.counts) + self.no_click

    def to_doc(self):
        doc = {
            "triad": self.index,
            "counts": list(self.counts),
            "no_click": self.no_click,
            "trials": self.trials,
            "failures": self.failures,
            "epsilon_hat": self.epsilon_hat,
            "upper_bound": self.upper_bound,
        }
        if self.members is not None:
            doc["members"] = list(self.members)
        if self.settings is not None:
            doc["settings"] = self.settings
            doc["target_parity"] = self.target_parity
        return doc


@dataclasses.dataclass(frozen=True)
class ExperimentReport:
    mode: str
    set_name: str
    N: int  # noqa: N815
    alpha: float
    no_click_policy: NoClickPolicy
    triads: Tuple[TriadStats, ...]
    verdict_requested: bool = True
    trials_per_triad: Optional[int] = None
    seed: Optional[int] = None
    config_digest: Optional[str] = None

    @property
    def alpha_per_triad(self):
        return self.alpha / self.N

    @property
    def epsilon_max(self):
        return max(t.epsilon_hat for t in self.triads)

    @property
    def u_max(self):
        return max(t.upper_bound for t in self.triads)

    @property
    def threshold(self):
        return 1.0 / self.N

    @property
    def verdict(self):
        if not self.verdict_requested:
            return None
        return verdict([t.upper_bound for t in self.triads], self.N)

    def to_doc(self):
        verdict_ = self.verdict
        return {
            "mode": self.mode,
            "set_name": self.set_name,
            "N": self.N,
            "alpha": self.alpha,
            "alpha_per_triad": self.alpha_per_triad,
            "no_click_policy": self.no_click_policy.value,
            "trials_per_triad": self.trials_per_triad,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "triads": [t.to_doc() for t in self.triads],
            "epsilon_max": self.epsilon_max,
            "u_max": self.u_max,
            "threshold": self.threshold,
            "verdict": None if verdict_ is None else verdict_.value,
        }


def clopper_pearson_upper(failures, trials, alpha):
    """Exact one-sided upper confidence bound at level 1 - alpha for the
    failure probability of a binomial sample.

    The bound is the p solving I_p(k + 1, n - k) = 1 - alpha, found by
    bisection on the regularized incomplete beta function.
    """
    if trials < 1 or not 0 <= failures <= trials:
        raise ValueError(f"Invalid sample: {failures} failures in {trials} trials")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be within (0, 1)")
    if failures == trials:
        return 1.0

    def excess(p):
        return scipy.special.betainc(failures + 1, trials - failures, p) - (1 - alpha)

    return float(scipy.optimize.bisect(excess, 0.0, 1.0, xtol=1e-15))


def verdict(upper_bounds: Sequence[float], num_triads):
    if num_triads < 1:
        raise ValueError("Need at least one triad")
    if max(upper_bounds) < 1.0 / num_triads:
        return Verdict.EXCLUDED
    return Verdict.INCONCLUSIVE


def triad_stats(
    index,
    counts,
    no_click,
    alpha_per_triad,
    policy,
    success_bins=(SUCCESS_SUM,),
    **labels,
):
    """Failure statistics of one triad (or GHZ context).

    `counts[b]` is the number of trials that landed in bin `b`, trials in
    `success_bins` succeed. Trials without a click fail or are discarded,
    depending on `policy`. A triad without usable trials gets the
    uninformative estimate 1.
    """
    counts = tuple(int(c) for c in counts)
    no_click = int(no_click)
    successes = sum(counts[b] for b in success_bins)

    denominator = sum(counts)
    if policy is NoClickPolicy.COUNT_AS_FAILURE:
        denominator += no_click
    failures = denominator - successes

    if denominator == 0:
        epsilon_hat, upper_bound = 1.0, 1.0
    else:
        epsilon_hat = failures / denominator
        upper_bound = clopper_pearson_upper(failures, denominator, alpha_per_triad)

    return TriadStats(
        index,
        counts,
        no_click,
        failures,
        denominator,
        epsilon_hat,
        upper_bound,
        **labels,
    )


def config_from_doc(doc, ks_set):
    """Build an `ExperimentConfig` from a validated `ExperimentConfigDoc`.

    A random hidden-variable model is drawn from its own stream of the
    config seed, so it is part of the reproducible setup.
    """
    state_doc = doc.state
    if state_doc.kind == "pure":
        vector = [complex(*z) if isinstance(z, tuple) else z for z in state_doc.vector]
        state = StateSpec("pure", quantum.pure_state(vector))
    else:
        state = StateSpec(state_doc.kind)

    noise = NoiseModel(
        doc.noise.jitter_sigma,
        doc.noise.detection_efficiency,
        NoClickPolicy(doc.noise.no_click_policy),
        doc.noise.depolarizing_p,
    )

    source_doc = doc.source
    if source_doc.kind == "quantum":
        source = Quantum(MeasurementModel(source_doc.model))
    elif source_doc.kind == "hidden-variable":
        hv_doc = source_doc.hv_model
        if hv_doc.random_points is not None:
            rng = chunk_rng(doc.seed, _MODEL_STREAM)
            model = kscore.random_hv_model(ks_set, hv_doc.random_points, rng)
        else:
            try:
                model = kscore.HVModel(
                    tuple(
                        (p.weight, kscore.Assignment(p.values)) for p in hv_doc.points
                    )
                )
            except ValueError as e:
                raise InvalidConfig(f"Invalid hidden-variable model: {e}") from e
        source = HiddenVariable(model)
    else:
        zero_position = source_doc.contextual_model
        if zero_position is None or zero_position.zero_position is None:
            model = kscore.ContextualModel.uniform(ks_set.N)
        else:
            try:
                model = kscore.ContextualModel(
                    tuple(tuple(p) for p in zero_position.zero_position)
                )
            except ValueError as e:
                raise InvalidConfig(f"Invalid contextual model: {e}") from e
        source = Contextual(model)

    return ExperimentConfig(
        ks_set,
        doc.trials_per_triad,
        doc.seed,
        doc.alpha,
        state,
        noise,
        source,
        doc.verdict,
        doc.chunk_size,
    )


def chunk_rng(seed, *key):
    bit_generator = np.random.Philox(np.random.SeedSequence(seed, spawn_key=key))
    return np.random.Generator(bit_generator)


def chunk_sizes(trials, chunk_size):
    full, rest = divmod(trials, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def default_workers():
    value = os.environ.get("KSF_THREADS")
    if value:
        try:
            workers = int(value)
        except ValueError:
            raise InvalidConfig(f"KSF_THREADS is not a number: {value!r}") from None
        if workers < 1:
            raise InvalidConfig("KSF_THREADS must be at least 1")
        return workers
    return os.cpu_count() or 1


def apply_detection(patterns, efficiency, rng):
    if efficiency < 1:
        lost = rng.random(patterns.shape) >= efficiency
        patterns[lost] = quantum.NO_CLICK
    return patterns


def tally(patterns, bins=None):
    """Bin counts of the clicked trials and the number of no-click trials.

    Without `bins` a trial lands in the bin of its result sum.
    """
    clicked = np.all(patterns != quantum.NO_CLICK, axis=1)
    if bins is None:
        bins = patterns.sum(axis=1)
    counts = np.bincount(bins[clicked], minlength=4)
    return counts[:4], int(np.count_nonzero(~clicked))


class _Simulation:
    def __init__(self, config):
        self._config = config
        ks_set = config.ks_set
        self._directions = np.array(ks_set.directions, dtype=float)
        if isinstance(config.source, HiddenVariable):
            self._values = config.source.model.value_matrix(len(ks_set.directions))
            self._weights = config.source.model.weights

    def run_chunk(self, triad_index, chunk_index, size):
        config = self._config
        rng = chunk_rng(config.seed, _TRIAL_STREAM, triad_index, chunk_index)
        triad = list(config.ks_set.triads[triad_index])

        if isinstance(config.source, Quantum):
            patterns = self._quantum_patterns(triad, size, rng)
        elif isinstance(config.source, HiddenVariable):
            points = rng.choice(len(self._weights), size=size, p=self._weights)
            patterns = self._values[points][:, triad].astype(np.int64)
        else:
            probabilities = config.source.model.zero_position[triad_index]
            zero_at = rng.choice(3, size=size, p=probabilities)
            patterns = np.ones((size, 3), dtype=np.int64)
            patterns[np.arange(size), zero_at] = 0

        patterns = apply_detection(patterns, config.noise.detection_efficiency, rng)
        return tally(patterns)

    def _quantum_patterns(self, triad, size, rng):
        noise = self._config.noise
        d1, d2, d3 = (
            geometry.jitter_many(self._directions[i], noise.jitter_sigma, rng, size)
            for i in triad
        )
        rho = self._rho(size, rng)
        if noise.depolarizing_p:
            p = noise.depolarizing_p
            rho = (1 - p) * rho + p * quantum.IDENTITY / 3

        if self._config.source.model is MeasurementModel.SEQUENTIAL:
            probabilities = quantum.branch_probabilities_batch(rho, d1, d2, d3)
            indices = quantum.sample_indices(probabilities, rng)
            return np.array(quantum.PATTERNS, dtype=np.int64)[indices]

        frames = geometry.orthonormalize_batch(d1, d2, d3)
        probabilities = quantum.joint_probabilities_batch(rho, frames)
        zero_at = quantum.sample_indices(probabilities, rng)
        patterns = np.ones((size, 3), dtype=np.int64)
        patterns[np.arange(size), zero_at] = 0
        return patterns

    def _rho(self, size, rng):
        spec = self._config.state
        if spec.kind == "maximally-mixed":
            return quantum.IDENTITY / 3
        if spec.kind == "pure":
            return spec.state.rho
        psi = rng.normal(size=(size, 3)) + 1j * rng.normal(size=(size, 3))
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        return np.einsum("mi,mj->mij", psi, psi.conj())


async def run_experiment_async(config, workers=None):
    ks_set = config.ks_set
    if config.verdict:
        kscore.epsilon_threshold(ks_set)

    if workers is None:
        workers = default_workers()

    simulation = _Simulation(config)
    sizes = chunk_sizes(config.trials_per_triad, config.chunk_size)
    jobs = [(k, c, size) for k in range(ks_set.N) for c, size in enumerate(sizes)]
    logger.info(
        "Simulating %d triads x %d trials in %d chunks on %d workers",
        ks_set.N,
        config.trials_per_triad,
        len(jobs),
        workers,
    )

    def job(k, c, size):
        return lambda: simulation.run_chunk(k, c, size)

    results = await util.run_in_threads(
        [job(*j) for j in jobs], max_workers=workers
    )

    counts = np.zeros((ks_set.N, 4), dtype=np.int64)
    no_click = np.zeros(ks_set.N, dtype=np.int64)
    for (k, _, _), (chunk_counts, chunk_no_click) in zip(jobs, results):
        counts[k] += chunk_counts
        no_click[k] += chunk_no_click

    alpha_per_triad = config.alpha / ks_set.N
    stats = tuple(
        triad_stats(
            k,
            counts[k],
            no_click[k],
            alpha_per_triad,
            config.noise.no_click_policy,
            members=tuple(ks_set.triads[k]),
        )
        for k in range(ks_set.N)
    )

    report = ExperimentReport(
        "ks",
        ks_set.name,
        ks_set.N,
        config.alpha,
        config.noise.no_click_policy,
        stats,
        verdict_requested=config.verdict,
        trials_per_triad=config.trials_per_triad,
        seed=config.seed,
        config_digest=config.digest(),
    )
    logger.info(
        "epsilon_max=%g u_max=%g threshold=%g verdict=%s",
        report.epsilon_max,
        report.u_max,
        report.threshold,
        report.verdict,
    )
    return report


def run_experiment(config, workers=None):
    return util.run(run_experiment_async(config, workers))


def read_trial_csv(source):
    """Yield (line, triad, (r1, r2, r3)) for every row of a trial CSV.

    `source` is a path, a text or a file object.
    """
    if isinstance(source, pathlib.Path):
        with open(source, newline="") as f:
            yield from read_trial_csv(f)
        return
    if isinstance(source, str):
        source = io.StringIO(source)

    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise MalformedRow("Trial CSV is empty", line=1)
    missing = [f for f in CSV_FIELDS if f not in reader.fieldnames]
    if missing:
        raise MalformedRow(f"Header misses {', '.join(missing)}", line=1)

    for row in reader:
        line = reader.line_num
        if None in row or any(row[f] is None for f in CSV_FIELDS):
            raise MalformedRow("Wrong number of fields", line=line)
        try:
            values = [int(row[f]) for f in CSV_FIELDS]
        except ValueError as e:
            raise MalformedRow(str(e), line=line) from e
        _, triad, *results = values
        if triad < 0:
            raise MalformedRow(f"Negative triad index {triad}", line=line)
        for r in results:
            if r not in (0, 1, quantum.NO_CLICK):
                raise MalformedRow(f"Invalid result {r}", line=line)
        yield line, triad, tuple(results)


def analyze_counts(
    source,
    ks_set,
    alpha,
    no_click_policy=NoClickPolicy.COUNT_AS_FAILURE,
    require_verdict=True,
):
    """Statistics of recorded trials, see `read_trial_csv` for `source`"""
    if not 0 < alpha < 1:
        raise InvalidConfig("alpha must be within (0, 1)")
    if require_verdict:
        kscore.epsilon_threshold(ks_set)

    counts = np.zeros((ks_set.N, 4), dtype=np.int64)
    no_click = np.zeros(ks_set.N, dtype=np.int64)
    for line, triad, results in read_trial_csv(source):
        if triad >= ks_set.N:
            raise UnknownTriad(
                f"Line {line}: triad {triad} isn't part of {ks_set.name!r} "
                f"({ks_set.N} triads)"
            )
        if quantum.NO_CLICK in results:
            no_click[triad] += 1
        else:
            counts[triad, sum(results)] += 1

    logger.info("Read %d trials", int(counts.sum() + no_click.sum()))
    alpha_per_triad = alpha / ks_set.N
    stats = tuple(
        triad_stats(
            k,
            counts[k],
            no_click[k],
            alpha_per_triad,
            no_click_policy,
            members=tuple(ks_set.triads[k]),
        )
        for k in range(ks_set.N)
    )
    return ExperimentReport(
        "ks",
        ks_set.name,
        ks_set.N,
        alpha,
        no_click_policy,
        stats,
        verdict_requested=require_verdict,
    )


class InvalidConfig(ValueError):
    pass


class MalformedRow(ValueError):
    def __init__(self, message, line):
        super().__init__(f"Line {line}: {message}")
        self.line = line


class UnknownTriad(ValueError):
    pass
