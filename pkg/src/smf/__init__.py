"""Structured matrix factorization with composable column penalties.

The package factors a measured matrix as ``Y ~ A(U V^T) + B(Q)`` where
every column pair ``(U_i, V_i)`` is charged a gauge-based rank-1 penalty.
It provides the penalties and their proximal operators, measurement
operators with exact adjoints, an alternating proximal-linear solver, a
first-order global-optimality certificate with a rank-adaptive escape
loop, and simulation drivers for deconvolved temporal imaging and
compressed hyperspectral recovery.
"""

from .regularizers import (
    GaugeSpec,
    NeighborGraph,
    Rank1Regularizer,
    ThetaForm,
    chain_graph,
    eval_gauge,
    eval_theta,
    eval_tv,
    lattice_graph,
    sum_theta,
    validate_rank1_regularizer,
)
from .proximal import (
    ProxResult,
    TVProxConfig,
    prox_gauge,
    prox_l1,
    prox_l1_tv,
    prox_l2,
    project_nonneg,
    tv_duality_gap,
)
from .linops import (
    IdentityOp,
    LinearOperator,
    OuterOnesOp,
    RandomPhaseConvOp,
    TemporalConvOp,
    operator_from_config,
)
from .solver import (
    FactorModel,
    InitSpec,
    ProblemSpec,
    SolverConfig,
    SolveTrace,
    build_init,
    grad_q,
    grad_u,
    grad_v,
    lipschitz_q,
    lipschitz_u,
    lipschitz_v,
    objective,
    prox_update_u,
    prox_update_v,
    residual,
    run,
    step,
)
from .optimality import (
    CertificateReport,
    MetaConfig,
    MetaResult,
    MetaRunConfig,
    PolarEstimate,
    check_certificate,
    find_redundancy,
    meta_step,
    polar_estimate,
    polar_exact_l1l1,
    polar_exact_l2l2,
    polar_lower_bound,
    run_meta,
)
from .io import load_matrix, read_smf1, save_matrix, write_smf1
from .segmentation import SegmentationResult, iou, region_ious, segment
from .experiments import (
    HsiData,
    HsiSpec,
    PhantomData,
    PhantomSpec,
    gen_phantom,
    hsi_init,
    hsi_problem,
    hsi_simulate,
    phantom_problem,
    recovery_error,
)

__version__ = "0.1.0"
