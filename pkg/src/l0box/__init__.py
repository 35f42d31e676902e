"""Box-constrained L0-penalized regression solvers with desk-scale verification tools."""

from .bench import (
    DESK_PRESETS,
    EXAMPLE_IDS,
    FULL_PRESETS,
    ExperimentSpec,
    GeneratedInstance,
    audit_trace_file,
    build_config,
    build_problem,
    generate_instance,
    make_spec,
    rate_probe,
    read_trace_csv,
    run_experiment,
    write_report,
    write_trace_csv,
)
from .core import (
    BoxSet,
    ContractViolation,
    Problem,
    SupportSet,
    objective,
    project_box,
    support,
    support_mask,
)
from .diagnostics import (
    AuditReport,
    EnergyMonitorH,
    EnergyMonitorW,
    IterateBundle,
    TheoryConstants,
    audit_descent,
    compute_delta,
    compute_gamma,
    compute_nu,
    compute_tau,
    compute_zeta,
)
from .oracle import (
    SupportCertificate,
    certificate_for_support,
    enumerate_local_minimizers,
    finite_diff_gradient,
    solve_restricted,
)
from .smoothing import (
    CensoredRegressionLoss,
    L1RegressionLoss,
    LeastSquaresLoss,
    censored_regression_loss,
    huber_scalar,
    l1_regression_loss,
    least_squares_loss,
    smooth_plus_scalar,
    spectral_norm,
)
from .solvers import (
    FihtConfig,
    SfihtConfig,
    SmoothingSchedule,
    SolveResult,
    choose_beta_step1,
    fiht_solve,
    sfiht_solve,
    stopping_check,
)
from .subproblem import (
    HardThresholdResult,
    SubproblemInput,
    hard_threshold_step,
    surrogate_value,
)

__version__ = "0.1.0"
