"""Iman-Conover risk aggregation with empirical margins."""

from .margins import (
    DataError,
    EmpiricalDistribution,
    EmpiricalMargin,
    ExponentialMargin,
    NormalMargin,
    StepCdf,
    ecdf_build,
    parse_margin,
    quantile,
    read_sample_csv,
    sup_distance,
)
from .copulas import (
    ClaytonCopula,
    CopulaSample,
    GaussCopula,
    GaussMultiCopula,
    IndependenceCopula,
    NoRidgeError,
    condition_025_integral,
    density,
    k_epsilon,
    parse_copula,
    ridge,
    sample,
)
from .reorder import (
    RankMatrix,
    SyntheticSample,
    TieError,
    compute_ranks,
    empirical_copula_eval,
    iman_conover,
    joint_ecdf,
    verify_latin_hypercube,
)
from .aggregate import (
    MAX,
    SUM,
    AggregationFunction,
    Branch,
    Leaf,
    aggregate_cdf,
    custom,
    kendall_cdf,
    layer_count_cdf,
    parse_tree,
    risk_measures,
    sum_cdf,
    tree_aggregate,
)
from .layers import (
    BoundaryCurve,
    LowerLayerSpec,
    boundary_curve,
    copula_mass_u_delta,
    distance_to_boundary,
    layer_membership,
    layer_probability_mc,
    volume_u_delta,
)
from .convergence import (
    ConvergenceReport,
    ExperimentConfig,
    OracleIncompatible,
    OracleSpec,
    fit_rate,
    oracle_cdf,
    run_experiment,
)

__version__ = "0.1.0"
