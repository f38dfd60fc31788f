"""Traffic matrix recovery from link-load measurements.

Recovers origin-destination traffic tensors purely from per-link load
series by solving, interval by interval, a nuclear-norm model with known
zero entries, nonnegativity, and continuity/periodicity priors, via a
convergent semi-proximal ADMM whose block updates are all closed-form.
Includes gravity/tomo-gravity baselines, cross-validation tuning, synthetic
instance generation, and NMAE evaluation.
"""

from .baselines import GravityPrior, gravity_estimate, tomo_gravity
from .driver import RecoveryReport, recover_sequence
from .errors import (
    DivergenceError,
    FoldInfeasibleError,
    GenerationError,
    MetricError,
    ParseError,
    RepairError,
    SlrtomoError,
    ValidationError,
)
from .kernels import BACKEND_ENV_VAR, HAVE_NUMBA, resolve_backend
from .metrics import n_cv, nmae, per_interval_nmae
from .operators import (
    RoutingOperator,
    estimate_lambda_max,
    project_mask,
    project_nonneg,
    project_spectral_ball,
)
from .solver import (
    IntervalProblem,
    IntervalSolution,
    SolverParams,
    SolverState,
    duality_gap,
    dual_objective,
    kkt_residuals,
    primal_objective,
    solve_interval,
)
from .synth import synthesize_instance
from .tensor_store import (
    RoutingMatrix,
    SparsityMask,
    TomographyInstance,
    TrafficTensor,
    apply_sparsity_protocol,
    load_instance,
    repair_anomalies,
    save_instance,
    unvec_index,
    vec_index,
)
from .tuning import CvPlan, CvResult, cv_score, kfold_split, sample_candidates, tune

__version__ = "0.1.0"
