"""Proximal method of multipliers with quadratic approximations for weakly
convex stochastic optimization under expectation inequality constraints."""

from .core import (
    AlgoConstants,
    BoxDomain,
    OracleError,
    StochasticProblem,
    compute_constants,
    estimate_bounds,
    positive_part,
    probe_bounds,
    project_box,
)
from .metrics import (
    ResidualSample,
    fit_power_law,
    kkt_map,
    lagrangian_grad,
    moreau_grad,
    prox_point,
    residual_row,
    running_averages,
)
from .problems import (
    fairness_generate,
    load_instance,
    np_generate,
    problem_from_instance,
    qcnp_generate,
    save_instance,
)
from .qmodel import CurvatureMatrix, QuadraticModel, aug_lagrangian, build_model, eval_model
from .rng import named_stream
from .solver import (
    IterateState,
    ParamSchedule,
    RunRecord,
    check_horizon,
    default_start,
    dual_update,
    log_grid,
    run_pmqsopt,
    schedule_params,
    select_output,
)
from .subproblem import (
    ApgResult,
    ApgSettings,
    SubproblemSpec,
    apg_minimize,
    eval_phi,
    grad_phi,
    solve_apg,
)

__version__ = "0.1.0"
