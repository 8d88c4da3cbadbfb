from ._experiment import (
    ExperimentConfig,
    ExperimentReport,
    NoClickPolicy,
    NoiseModel,
    Verdict,
    analyze_counts,
    clopper_pearson_upper,
    run_experiment,
    verdict,
)
from ._ghz import GhzConfig, ghz_contexts, lhv_max_satisfiable, run_ghz_experiment
from ._kscore import (
    KSSet,
    epsilon_threshold,
    is_colorable,
    make_ks_set,
    min_trials_for_exclusion,
    min_violated_triads,
    peres_set,
    triad_complete,
    union_bound_lower,
)
from ._quantum import branch_probabilities, maximally_mixed, pure_state
