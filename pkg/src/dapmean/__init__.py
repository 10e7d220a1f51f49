"""LDP mean estimation under general colluding poisoning attacks.

Building blocks: the piecewise perturbation mechanism, attack generators,
EM-based histogram filters that probe attacker features, the grouped
differential aggregation protocol, and a seeded experiment runner.
"""

from .attacks import (
    AttackTrace,
    PoisonSpec,
    evasion_bounds,
    gen_bba,
    gen_evasive,
    gen_gba,
    gen_input_manipulation,
    reduce_gba_to_bba,
)
from .bench import ExperimentConfig, gen_beta, load_csv, mse, run_experiment
from .filters import (
    ByzantineFeatures,
    HistogramPair,
    ObservedCounts,
    TransformMatrix,
    bucket_counts,
    build_transform,
    cemf_star,
    default_tolerance,
    emf,
    emf_star,
    estimate_features,
    init_o_prime,
    poison_mean,
    probe_side,
)
from .mechanism import (
    BucketGrid,
    Budget,
    Dataset,
    ValueDomain,
    normalize_dataset,
    perturbation_matrix,
    pm_perturb,
    transition_prob,
    worst_case_variance,
)
from .protocol import (
    AggregateResult,
    GroupEstimate,
    GroupPlan,
    aggregate_means,
    baseline_run,
    dap_collect,
    dap_plan,
    intra_group_mean,
    optimal_weights,
    ostrich,
    run_dap,
    trimming,
)

__version__ = "0.1.0"
