"""Latent Markov models for longitudinal categorical data.

Estimation by multistart EM with scaled forward-backward recursions,
nine latent-state selection criteria (penalised log-likelihood and
posterior-entropy based), scenario simulation, and a Monte Carlo study
harness that reports selection frequencies.
"""

__version__ = "0.1.0"

from .criteria import (
    CRITERIA,
    CriterionValues,
    SelectionReport,
    classification_criteria,
    criterion_values,
    loglik_criteria,
    select_k,
)
from .em import (
    AllStartsFailed,
    EMOptions,
    ExpectedCounts,
    FitResult,
    canonicalize_states,
    deterministic_start,
    e_step,
    fit,
    m_step,
    random_start,
)
from .harness import (
    CellResult,
    FrequencyTable,
    KRangeResult,
    ReplicateRecord,
    StudyConfig,
    evaluate_k_range,
    run_cell,
    run_study,
)
from .inference import (
    ENUMERATION_CAP,
    ForwardBackwardTables,
    PosteriorTables,
    ZeroProbabilityPattern,
    dataset_entropy,
    entropy_exact,
    entropy_marginal,
    entropy_normalized,
    forward_backward,
    log_likelihood,
    log_manifest_probability,
    pattern_log_probabilities,
    posteriors,
)
from .model import (
    Dataset,
    LMParameters,
    ModelSpec,
    count_free_parameters,
    permute_states,
    uniform_parameters,
    validate,
)
from .simulate import (
    DEFAULT_MASTER_SEED,
    Scenario,
    draw_dataset,
    draw_unit,
    draw_units,
    scenario_preset,
)

__all__ = [
    "__version__",
    "CRITERIA",
    "CriterionValues",
    "SelectionReport",
    "classification_criteria",
    "criterion_values",
    "loglik_criteria",
    "select_k",
    "AllStartsFailed",
    "EMOptions",
    "ExpectedCounts",
    "FitResult",
    "canonicalize_states",
    "deterministic_start",
    "e_step",
    "fit",
    "m_step",
    "random_start",
    "CellResult",
    "FrequencyTable",
    "KRangeResult",
    "ReplicateRecord",
    "StudyConfig",
    "evaluate_k_range",
    "run_cell",
    "run_study",
    "ENUMERATION_CAP",
    "ForwardBackwardTables",
    "PosteriorTables",
    "ZeroProbabilityPattern",
    "dataset_entropy",
    "entropy_exact",
    "entropy_marginal",
    "entropy_normalized",
    "forward_backward",
    "log_likelihood",
    "log_manifest_probability",
    "pattern_log_probabilities",
    "posteriors",
    "Dataset",
    "LMParameters",
    "ModelSpec",
    "count_free_parameters",
    "permute_states",
    "uniform_parameters",
    "validate",
    "DEFAULT_MASTER_SEED",
    "Scenario",
    "draw_dataset",
    "draw_unit",
    "draw_units",
    "scenario_preset",
]
