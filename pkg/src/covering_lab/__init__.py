"""Exact-arithmetic laboratory for the exponential covering lemma on Zygmund box families in R^3."""

from .geometry import (
    Box3,
    BoxFamily,
    CoordinateOverflowError,
    Interval,
    ZygmundProfile,
    dilate,
    intersect,
    validate_zygmund,
)
from .measure import (
    DepthHistogram,
    ExpOverflowError,
    Grid3,
    JointDepthHistogram,
    compress,
    depth_histogram,
    exp_integral,
    joint_depth_histogram,
    union_measure,
)
from .selection import (
    SelectionResult,
    chain_constant,
    cordoba_select,
    order_by_third_side,
    p1_filter,
    product_bound_check,
    select_family,
    split_classes,
    verify_selection,
)
from .maximal import (
    ScalarField3,
    hl_maximal_1d,
    level_set_measure,
    rejected_inclusion_check,
    strong_maximal_grid,
    weak_type_check,
)
from .families import ExperimentConfig, generate_adversarial_family, generate_zygmund_family
from .experiment import emit_report, run_experiment

__version__ = "0.1.0"
