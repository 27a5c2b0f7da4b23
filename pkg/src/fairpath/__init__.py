"""Tolerance paths, group-welfare curves, and implied welfare weights
for covariance-bounded soft-margin SVM classifiers."""

from .data import (
    Dataset,
    GroupStats,
    Schema,
    group_stats,
    load_dataset,
    load_schema,
    standardize,
)
from .dichotomies import (
    LabelingWitness,
    PointCloud,
    cover_count,
    enumerate_labelings,
    make_point_cloud,
    perturb_degenerate,
    pivot_translate,
    separability_oracle,
)
from .kernel import ProjectedKernel, projected_kernel
from .path import (
    Breakpoint,
    SolutionPath,
    classify_event,
    cross_derivatives,
    slopes,
    stable_range,
    trace_path,
)
from .solver import (
    DualSolution,
    PrimalSolution,
    global_sensitivity_bound,
    partition,
    recover_primal,
    shadow_price,
    solve_at,
    solve_dual,
)
from .welfare import (
    WeightProfile,
    WelfareTriple,
    group_welfare_exact,
    group_welfare_heuristic,
    implied_weights,
    pareto_compare,
    reference_weights,
    weights_roundtrip_check,
)

__version__ = "0.1.0"
