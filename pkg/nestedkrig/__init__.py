"""
Nestedkrig package - Kriging submodel aggregation and its error analysis.

This package aggregates Gaussian-process (Kriging) submodels fitted on groups
of a design and compares the result with exact Kriging:

- Exact Kriging with jittered Cholesky factorization
- Variance-based aggregation (PoE, gPoE, BCM, rBCM)
- Nested Kriging, the best linear combination of the submodels
- The aggregated process Y_A: prior/posterior covariances and sampling
- Error identities, max-error bounds and closed-form mean square errors
- Consistency and non-consistency studies on growing designs

Usage:
    from nestedkrig.kernels import make_kernel
    from nestedkrig.submodels import fit_submodels, make_partition
    from nestedkrig.nested_aggregator import nested_predict
"""

__version__ = "0.1.0"

__all__ = [
    # kernels
    "KernelFamily",
    "KernelSpec",
    "eval_kernel",
    "kernel_matrix",
    "make_kernel",
    "neb_qualified",
    # exact Kriging
    "FullModel",
    "fit_full",
    "kriging_weights",
    "predict_full",
    "predict_full_batch",
    "predict_full_cov",
    # submodels
    "Partition",
    "PartitionStrategy",
    "SubmodelBank",
    "SubmodelPrediction",
    "fit_submodels",
    "make_partition",
    "predict_submodels",
    "submodel_weights",
    # aggregation
    "AggregationMethod",
    "NestedPrediction",
    "VarianceAggregate",
    "aggregate_variance_based",
    "cross_covariances",
    "nested_predict",
    "nested_predict_batch",
    "variance_weights",
    # aggregated process
    "AggregatedProcessModel",
    "c_agg",
    "conditional_mean",
    "covariance_gap",
    "fit_aggregated_process",
    "k_agg",
    "sample_paths",
    # diagnostics
    "BoundCheck",
    "ErrorReport",
    "bounds_report",
    "covariance_gap_identities",
    "delta_matrix",
    "error_report",
    "exact_mse",
    "max_error_bound_check",
    "nearest_neighbor_mse",
    # experiments
    "ExperimentReport",
    "NonConsistencyConfig",
    "build_adversarial_design",
    "run_consistency",
    "run_nonconsistency",
    # errors
    "NestedKrigError",
    "ArgumentError",
    "NumericalError",
]


from nestedkrig.aggregated_process import (
    AggregatedProcessModel,
    c_agg,
    conditional_mean,
    covariance_gap,
    fit_aggregated_process,
    k_agg,
    sample_paths,
)
from nestedkrig.diagnostics import (
    BoundCheck,
    ErrorReport,
    bounds_report,
    covariance_gap_identities,
    delta_matrix,
    error_report,
    exact_mse,
    max_error_bound_check,
    nearest_neighbor_mse,
)
from nestedkrig.errors import ArgumentError, NestedKrigError, NumericalError
from nestedkrig.experiments import (
    ExperimentReport,
    NonConsistencyConfig,
    build_adversarial_design,
    run_consistency,
    run_nonconsistency,
)
from nestedkrig.gp_core import (
    FullModel,
    fit_full,
    kriging_weights,
    predict_full,
    predict_full_batch,
    predict_full_cov,
)
from nestedkrig.kernels import (
    KernelFamily,
    KernelSpec,
    eval_kernel,
    kernel_matrix,
    make_kernel,
    neb_qualified,
)
from nestedkrig.nested_aggregator import (
    NestedPrediction,
    cross_covariances,
    nested_predict,
    nested_predict_batch,
)
from nestedkrig.submodels import (
    Partition,
    PartitionStrategy,
    SubmodelBank,
    SubmodelPrediction,
    fit_submodels,
    make_partition,
    predict_submodels,
    submodel_weights,
)
from nestedkrig.variance_aggregators import (
    AggregationMethod,
    VarianceAggregate,
    aggregate_variance_based,
    variance_weights,
)
