"""Estimation of the low-rank latent component of a Gaussian graphical
model precision matrix by non-convex projected gradient descent."""

from .baseline import AdmmConfig, AdmmTrace, admm_lvglasso, soft_threshold, svt
from .datagen import (
    GenerationError,
    GenParams,
    SyntheticModel,
    gen_model,
    load_dataset,
    sample_covariance,
)
from .linalg import (
    CholeskyFactor,
    NotPositiveDefiniteError,
    Spectrum,
    best_rank_r,
    cholesky_logdet,
    frobenius_inner,
    sym_evd,
    symmetrize,
    woodbury_inverse,
    woodbury_inverse_eig,
)
from .matio import MatrixParseError, read_matrix, write_matrix
from .objective import (
    ModelContext,
    RscRssBounds,
    gradient,
    nll,
    projected_gradient_norm,
    rsc_rss_bounds,
)
from .projections import (
    ProjectionConfig,
    Subspace,
    bk_svd,
    default_krylov_depth,
    head_project,
    lanczos_subspace,
    psd_rank_r_project,
    tail_project,
)
from .solvers import (
    BacktrackingConfig,
    DivergedError,
    InsufficientDataError,
    LowRankEstimate,
    SolverConfig,
    Trace,
    ap_lvm,
    auto_step_size,
    contraction_estimate,
    ep_lvm,
    psd_finalize,
)

__version__ = "0.1.0"
