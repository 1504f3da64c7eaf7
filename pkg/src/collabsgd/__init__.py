"""Online personalized decentralized SGD with adaptive collaboration weights.

Clients minimize their own losses with stochastic gradients and dynamically
weight peers' gradients by a gradient-similarity criterion, trading variance
reduction against collaboration bias.  The package bundles the weighted
aggregation training loop with baselines, the supporting theory objects
(sufficient clusters, excess-loss bounds, sample complexity), and a CLI
harness for reproducible synthetic experiments.
"""

from .collaboration import (
    CollaborationState,
    Criterion,
    NoAdmissibleCollaborator,
    compute_weights,
    estimate_ratios,
    exact_ratios,
    similarity_ratio,
    step_size_ratio_bounds,
)
from .objectives import (
    HeterogeneityMatrix,
    LsrObjective,
    ObjectiveConstants,
    QuadraticObjective,
    constants,
    heterogeneity_bounds,
    make_population,
    shifted_optima_quadratics,
    two_cluster_lsr,
    validate_heterogeneity,
)
from .optimizer import AlgorithmSpec, DivergenceError, RunRecord, StepSchedule, run_experiment
from .streams import RngStream, sample_gaussian_vector, sample_orthogonal_matrix
from .theory import (
    BoundEvaluation,
    SufficientClusterReport,
    descent_bound_rhs,
    nesting_check,
    nonconvex_rate_bound,
    runtime_inclusion_check,
    sample_complexity,
    sufficient_cluster,
    table1_bound,
)

__version__ = "0.1.0"
