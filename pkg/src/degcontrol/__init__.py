"""Bilinear optimal control of a degenerate 1D parabolic equation.

P1 finite elements on [-1, 1] with a diffusion coefficient vanishing at both
ends, theta-scheme time stepping, exact discrete gradients and Hessians, a
projected-gradient optimizer with second-order certification, and executable
checks of the stability and optimality estimates.
"""

from .errors import AssemblyFailure, InvalidArgument, StepFailure
from .geometry import AssembledOperators, ControlRegion, DiffusionCoefficient, Mesh1D, assemble, build_mesh
from .fields import (
    ControlField,
    ProblemSpec,
    TimeGrid,
    Trajectory,
    control_inner,
    norm_CtL2,
    norm_H1a,
    norm_L2H1a,
    norm_L2_space,
    norm_L2_spacetime,
    norm_Linf,
)
from .solvers import (
    DEFAULT_SCHEME,
    SchemeOptions,
    solve_adjoint,
    solve_linearized,
    solve_second_linearized,
    solve_state,
    solve_state_inhomogeneous,
)
from .reduced import (
    active_set,
    algebraic_gradient,
    cost,
    critical_cone_test,
    evaluate,
    gradient_at,
    hessian_form,
    project_box,
    reduced_gradient,
    ssc_threshold,
    stationarity_residual,
    trichotomy_audit,
)
from .optimizer import OptimizerOptions, certify, initial_control, optimize
from .problem import ProblemSetup
from .verification import (
    check_max_principles,
    convergence_study,
    gradient_check,
    hessian_check,
    lipschitz_probe,
)

__version__ = "0.1.0"
