"""Jacobian-free tangent frames and on-manifold editing for probability-flow diffusion.

Everything runs on analytic toy problems (Gaussian-mixture data concentrated
around curves) so the estimated frames can be checked against exact geometry.
"""

from .schedule import DomainError, Schedule
from .score import GaussianComponent, ScoreField, make_affine_gaussian, make_curve_tube
from .flow import (
    FlowConfig,
    IntegrationError,
    RetractionConfig,
    T_MIN,
    integrate,
    pf_drift,
    phi,
    retract,
)
from .manifold import (
    AffineSubspace,
    AmbiguityError,
    Circle,
    Line,
    ManifoldOracle,
    Parabola,
    Sphere,
    make_manifold,
)
from .tangent import (
    RankError,
    SecantEnsemble,
    TangentFrame,
    estimate_frame,
    fd_jacobian,
    generate_ensemble,
    loco_baseline_frame,
    posterior_mean,
    rank_ratio,
    subspace_deviation,
    truncation_order,
)
from .edit import (
    EditConfig,
    EditState,
    EditTrace,
    GuidanceSpec,
    geoedit_run,
    guidance_vector,
    jacobian_start,
    projected_gd,
    run_loop,
)

__version__ = "0.1.0"
