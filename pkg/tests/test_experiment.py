import math

import numpy as np
import pytest
import scipy.stats

import ks_finite._experiment as experiment
import ks_finite._geometry as geometry
import ks_finite._kscore as kscore
import ks_finite._models as models
import ks_finite._quantum as quantum
import ks_finite._util as util

from .util import trial_csv


@pytest.mark.parametrize(("trials", "alpha"), [(1, 0.05), (10, 0.01), (328, 0.00025)])
def test_clopper_pearson_without_failures(trials, alpha):
    upper = experiment.clopper_pearson_upper(0, trials, alpha)
    assert upper == pytest.approx(1 - alpha ** (1 / trials), abs=1e-12)


def test_clopper_pearson_all_failures():
    assert experiment.clopper_pearson_upper(7, 7, 0.05) == 1.0


@pytest.mark.parametrize(
    ("failures", "trials", "alpha"),
    [(1, 100, 0.05), (10, 1000, 0.01), (50, 60, 0.2)],
)
def test_clopper_pearson_matches_beta_quantile(failures, trials, alpha):
    upper = experiment.clopper_pearson_upper(failures, trials, alpha)
    expected = scipy.stats.beta.ppf(1 - alpha, failures + 1, trials - failures)
    assert upper == pytest.approx(expected, abs=1e-9)
    assert upper > failures / trials


@pytest.mark.parametrize(
    ("failures", "trials"),
    [(-1, 10), (11, 10), (0, 0)],
)
def test_clopper_pearson_invalid(failures, trials):
    with pytest.raises(ValueError, match="Invalid sample"):
        experiment.clopper_pearson_upper(failures, trials, 0.05)


def test_min_trials_excludes_exactly():
    n = kscore.min_trials_for_exclusion(40, 0.01)
    assert experiment.clopper_pearson_upper(0, n, 0.01 / 40) < 1 / 40
    assert experiment.clopper_pearson_upper(0, n - 1, 0.01 / 40) >= 1 / 40


@pytest.mark.parametrize(
    ("upper_bounds", "expected"),
    [
        ([0.001] * 40, experiment.Verdict.EXCLUDED),
        ([0.001] * 39 + [0.03], experiment.Verdict.INCONCLUSIVE),
        ([0.001] * 39 + [1 / 40], experiment.Verdict.INCONCLUSIVE),
    ],
)
def test_verdict(upper_bounds, expected):
    assert experiment.verdict(upper_bounds, 40) is expected


def test_triad_stats_policies():
    counts = (0, 5, 80, 5)
    kept = experiment.triad_stats(
        0, counts, 10, 0.01, experiment.NoClickPolicy.COUNT_AS_FAILURE
    )
    assert (kept.failures, kept.denominator, kept.trials) == (20, 100, 100)
    assert kept.epsilon_hat == 0.2

    discarded = experiment.triad_stats(0, counts, 10, 0.01, experiment.NoClickPolicy.DISCARD)
    assert (discarded.failures, discarded.denominator) == (10, 90)
    assert discarded.epsilon_hat <= kept.epsilon_hat


def test_triad_stats_without_usable_trials():
    stats = experiment.triad_stats(0, (0, 0, 0, 0), 5, 0.01, experiment.NoClickPolicy.DISCARD)
    assert (stats.epsilon_hat, stats.upper_bound) == (1.0, 1.0)


def test_chunk_sizes():
    assert experiment.chunk_sizes(10, 4) == [4, 4, 2]
    assert experiment.chunk_sizes(8, 4) == [4, 4]
    assert experiment.chunk_sizes(3, 4) == [3]


def test_zero_noise_excludes(peres_completed):
    trials = kscore.min_trials_for_exclusion(peres_completed.N, 0.01)
    config = experiment.ExperimentConfig(peres_completed, trials, seed=1, alpha=0.01)
    report = experiment.run_experiment(config, workers=2)

    assert report.epsilon_max == 0
    assert report.u_max < report.threshold == 1 / 40
    assert report.verdict is experiment.Verdict.EXCLUDED
    for stats in report.triads:
        assert stats.counts == (0, 0, trials, 0)


@pytest.mark.parametrize("model", list(experiment.MeasurementModel))
def test_zero_noise_perfect(peres_completed, model):
    config = experiment.ExperimentConfig(
        peres_completed,
        10_000,
        seed=2,
        source=experiment.Quantum(model),
        state=experiment.StateSpec("random-per-trial"),
    )
    report = experiment.run_experiment(config, workers=4)
    assert report.epsilon_max == 0
    assert report.verdict is experiment.Verdict.EXCLUDED


def test_joint_model_ignores_jitter(peres_completed):
    noise = experiment.NoiseModel(jitter_sigma=0.3)
    config = experiment.ExperimentConfig(
        peres_completed,
        2000,
        seed=3,
        noise=noise,
        source=experiment.Quantum(experiment.MeasurementModel.JOINT),
    )
    assert experiment.run_experiment(config).epsilon_max == 0


def test_jitter_matches_analytic_failure(axes):
    sigma = 0.2
    trials = 20_000
    config = experiment.ExperimentConfig(
        axes,
        trials,
        seed=4,
        noise=experiment.NoiseModel(jitter_sigma=sigma),
        verdict=False,
    )
    report = experiment.run_experiment(config)
    assert report.verdict is None

    rng = np.random.default_rng(99)
    state = quantum.maximally_mixed()
    samples = [
        quantum.failure_probability(
            state, *(geometry.jitter_many(n, sigma, rng, 1)[0] for n in axes.directions)
        )
        for _ in range(4000)
    ]
    expected = float(np.mean(samples))
    oracle_error = float(np.std(samples)) / math.sqrt(len(samples))
    sampling_error = math.sqrt(expected * (1 - expected) / trials)

    assert expected > 0
    assert abs(report.epsilon_max - expected) < 4 * (sampling_error + oracle_error)


def test_single_triad_requires_uncolorable_set(axes):
    config = experiment.ExperimentConfig(axes, 10, seed=0)
    with pytest.raises(kscore.ColorableSet):
        experiment.run_experiment(config)


def test_deterministic_across_workers(three_frames):
    noise = experiment.NoiseModel(
        jitter_sigma=0.05, detection_efficiency=0.95, depolarizing_p=0.1
    )
    config = experiment.ExperimentConfig(
        three_frames, 3000, seed=5, noise=noise, verdict=False, chunk_size=500
    )
    reports = [
        util.dumps(experiment.run_experiment(config, workers=workers).to_doc())
        for workers in (1, 4, 8)
    ]
    assert reports[0] == reports[1] == reports[2]


def test_different_seeds_differ(three_frames):
    noise = experiment.NoiseModel(jitter_sigma=0.2)

    def epsilon(seed):
        config = experiment.ExperimentConfig(
            three_frames, 2000, seed=seed, noise=noise, verdict=False
        )
        return [t.failures for t in experiment.run_experiment(config).triads]

    assert epsilon(1) != epsilon(2)


def test_count_as_failure_dominates_discard(three_frames):
    def run(policy):
        noise = experiment.NoiseModel(
            jitter_sigma=0.1, detection_efficiency=0.9, no_click_policy=policy
        )
        config = experiment.ExperimentConfig(
            three_frames, 5000, seed=6, noise=noise, verdict=False
        )
        return experiment.run_experiment(config)

    kept = run(experiment.NoClickPolicy.COUNT_AS_FAILURE)
    discarded = run(experiment.NoClickPolicy.DISCARD)
    for a, b in zip(kept.triads, discarded.triads):
        assert a.counts == b.counts
        assert a.no_click == b.no_click > 0
        assert a.epsilon_hat >= b.epsilon_hat
    # 1 - 0.9**3 of the trials lose a click
    assert kept.triads[0].no_click / 5000 == pytest.approx(0.271, abs=0.03)


def test_counts_sum_to_trials(three_frames):
    noise = experiment.NoiseModel(jitter_sigma=0.3, detection_efficiency=0.8)
    config = experiment.ExperimentConfig(
        three_frames, 1234, seed=7, noise=noise, verdict=False, chunk_size=100
    )
    for stats in experiment.run_experiment(config).triads:
        assert sum(stats.counts) + stats.no_click == 1234
        assert stats.epsilon_hat <= stats.upper_bound


@pytest.mark.slow
def test_hidden_variable_source_is_not_excluded(peres_completed, rng):
    threshold = 1 / peres_completed.N
    # every point violates at least this many triads
    floor = kscore.min_violated_triads(peres_completed) / peres_completed.N
    trials = 100_000
    for _ in range(100):
        model = kscore.random_hv_model(peres_completed, int(rng.integers(1, 6)), rng)
        config = experiment.ExperimentConfig(
            peres_completed,
            trials,
            seed=int(rng.integers(2**32)),
            source=experiment.HiddenVariable(model),
        )
        report = experiment.run_experiment(config)
        sigma = math.sqrt(floor * (1 - floor) / trials)
        assert report.epsilon_max >= floor - 5 * sigma
        assert report.u_max >= threshold
        assert report.verdict is experiment.Verdict.INCONCLUSIVE


@pytest.mark.slow
def test_best_hidden_variable_model(peres_completed):
    # a single optimal assignment fails only the unavoidable triads
    best, assignment = kscore.min_violated_assignment(peres_completed)
    model = kscore.HVModel(((1.0, assignment),))
    config = experiment.ExperimentConfig(
        peres_completed, 100, seed=8, source=experiment.HiddenVariable(model)
    )
    report = experiment.run_experiment(config)
    failing = [t.index for t in report.triads if t.failures]
    assert failing == kscore.verify_assignment(peres_completed, assignment)
    assert len(failing) == best
    assert report.epsilon_max == 1
    assert report.verdict is experiment.Verdict.INCONCLUSIVE


def test_contextual_source_reproduces_sum_rule(peres_completed):
    config = experiment.ExperimentConfig(
        peres_completed,
        500,
        seed=9,
        source=experiment.Contextual(kscore.ContextualModel.uniform(peres_completed.N)),
    )
    report = experiment.run_experiment(config)
    assert report.epsilon_max == 0
    assert report.verdict is experiment.Verdict.EXCLUDED


@pytest.mark.parametrize(
    ("kwargs", "message"),
    [
        ({"trials_per_triad": 0}, "trials_per_triad"),
        ({"alpha": 1.0}, "alpha"),
        ({"seed": -1}, "seed"),
        ({"chunk_size": 0}, "chunk_size"),
    ],
)
def test_invalid_config(axes, kwargs, message):
    values = {"trials_per_triad": 10, "seed": 0, **kwargs}
    with pytest.raises(experiment.InvalidConfig) as execinfo:
        experiment.ExperimentConfig(axes, **values)
    assert message in str(execinfo.value)


def test_invalid_noise():
    with pytest.raises(experiment.InvalidConfig):
        experiment.NoiseModel(detection_efficiency=1.5)


def test_config_from_doc(peres_completed):
    doc = models.ExperimentConfigDoc.parse_obj(
        {
            "set": "builtin:peres-completed",
            "trials_per_triad": 100,
            "seed": 3,
            "state": {"kind": "pure", "vector": [[0.6, 0], [0, 0.8], 0]},
            "noise": {"jitter_sigma": "1deg", "detection_efficiency": 0.99},
            "source": {"kind": "hidden-variable", "hv_model": {"random_points": 3}},
        }
    )
    config = experiment.config_from_doc(doc, peres_completed)
    assert config.noise.jitter_sigma == pytest.approx(math.pi / 180)
    np.testing.assert_allclose(config.state.state.vector, [0.6, 0.8j, 0])
    assert len(config.source.model.points) == 3

    again = experiment.config_from_doc(doc, peres_completed)
    assert again.digest() == config.digest()
    assert len(config.digest()) == 64


def test_report_doc_validates(peres_completed):
    config = experiment.ExperimentConfig(peres_completed, 50, seed=10)
    doc = experiment.run_experiment(config).to_doc()
    parsed = models.ExperimentReportDoc.parse_obj(doc)
    assert parsed.mode == "ks"
    assert parsed.N == 40
    assert parsed.alpha_per_triad == pytest.approx(0.01 / 40)
    assert parsed.config_digest == config.digest()
    assert parsed.seed == 10
    assert parsed.triads[0].members == list(peres_completed.triads[0])


def test_analyze_counts_perfect(axes):
    text = trial_csv([(0, (1, 1, 0))] * 1000)
    report = experiment.analyze_counts(text, axes, 0.01, require_verdict=False)
    assert report.triads[0].epsilon_hat == 0
    assert report.triads[0].trials == 1000


def test_analyze_counts_failures(axes):
    rows = [(0, (0, 1, 1))] * 990 + [(0, (1, 1, 1))] * 10
    report = experiment.analyze_counts(trial_csv(rows), axes, 0.01, require_verdict=False)
    assert report.triads[0].epsilon_hat == pytest.approx(0.01)
    assert report.triads[0].counts == (0, 0, 990, 10)


def test_analyze_counts_no_click(axes):
    rows = [(0, (0, 1, 1))] * 90 + [(0, (0, -1, 1))] * 10
    discard = experiment.NoClickPolicy.DISCARD
    report = experiment.analyze_counts(
        trial_csv(rows), axes, 0.01, discard, require_verdict=False
    )
    assert report.triads[0].no_click == 10
    assert report.triads[0].epsilon_hat == 0


def test_analyze_counts_unknown_triad(three_frames):
    text = "trial,triad,r1,r2,r3\n5,3,1,1,1\n"
    with pytest.raises(experiment.UnknownTriad) as execinfo:
        experiment.analyze_counts(text, three_frames, 0.01, require_verdict=False)
    assert "triad 3" in str(execinfo.value)


@pytest.mark.parametrize(
    ("text", "line"),
    [
        ("", 1),
        ("trial,triad,r1,r2\n0,0,1,1\n", 1),
        ("trial,triad,r1,r2,r3\n0,0,1,1,0\n1,0,1,1\n", 3),
        ("trial,triad,r1,r2,r3\n0,0,1,2,0\n", 2),
        ("trial,triad,r1,r2,r3\n0,0,1,1,0\n1,x,1,1,0\n", 3),
        ("trial,triad,r1,r2,r3\n0,-1,1,1,0\n", 2),
    ],
)
def test_analyze_counts_malformed(axes, text, line):
    with pytest.raises(experiment.MalformedRow) as execinfo:
        experiment.analyze_counts(text, axes, 0.01, require_verdict=False)
    assert execinfo.value.line == line
    assert f"Line {line}" in str(execinfo.value)


def test_analyze_counts_pipeline_matches_simulation(three_frames):
    noise = experiment.NoiseModel(jitter_sigma=0.2, detection_efficiency=0.9)
    config = experiment.ExperimentConfig(
        three_frames, 500, seed=11, noise=noise, verdict=False
    )
    simulated = experiment.run_experiment(config)

    rows = []
    for stats in simulated.triads:
        patterns = {0: (0, 0, 0), 1: (0, 0, 1), 2: (0, 1, 1), 3: (1, 1, 1)}
        for bin_, count in enumerate(stats.counts):
            rows += [(stats.index, patterns[bin_])] * count
        rows += [(stats.index, (-1, 1, 0))] * stats.no_click

    analyzed = experiment.analyze_counts(
        trial_csv(rows), three_frames, 0.01, require_verdict=False
    )
    assert [t.to_doc() for t in analyzed.triads] == [
        t.to_doc() for t in simulated.triads
    ]


def test_default_workers(monkeypatch):
    monkeypatch.setenv("KSF_THREADS", "3")
    assert experiment.default_workers() == 3
    monkeypatch.setenv("KSF_THREADS", "zero")
    with pytest.raises(experiment.InvalidConfig):
        experiment.default_workers()
    monkeypatch.delenv("KSF_THREADS")
    assert experiment.default_workers() >= 1
