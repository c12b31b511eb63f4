"""Discriminative regression machine (DRM) classifier toolkit.

A kernel regression classifier with an explicit within-class scatter
penalty, solved in closed form or by three iterative solvers (gradient
descent with exact line search, proximal-point iteration, accelerated
proximal gradient), with matrix-free linear-kernel fast paths.
"""

from .classifier import (
    DrmModel,
    Prediction,
    dissimilarities,
    fit,
    load_model,
    restrict,
    save_model,
)
from .dataset import (
    GroupedDataset,
    ScalingTransform,
    SplitSpec,
    group_by_label,
    parse_csv,
    parse_libsvm,
    scale_apply,
    scale_fit,
    split,
)
from .evaluation import (
    ConfusionMatrix,
    CvResult,
    CvRow,
    Grid,
    GridCell,
    accuracy,
    confusion,
    g_mean,
    grid_search,
)
from .kernels import (
    DenseQOperator,
    FactorQOperator,
    KernelSpec,
    LinearQOperator,
    QOperator,
    build_operator,
    compute_B,
    compute_H,
    compute_K,
    compute_Kx,
    kernel_eval,
    make_factor_operator,
    sigma_max_estimate,
)
from .solvers import (
    DrmHyperParams,
    SolverConfig,
    SolverReport,
    gradient,
    objective,
    solve,
    solve_apg,
    solve_closed_form,
    solve_gd,
    solve_ppa,
)

__version__ = "0.1.0"
