"""Numerics for the weakly degenerate heat equation ``u_t = (x^alpha u_x)_x``.

Graded-mesh flux discretization, theta-scheme time stepping with boundary
control at the degenerate end, Carleman-weight diagnostics and penalized
boundary-control synthesis.
"""

from .errors import *  # noqa: F401,F403
from .mesh import GradedMesh, GridFunction, build_graded_mesh, norms, weighted_integral
from .operator import assemble, conormal_trace_at_zero, eigen_smallest, hardy_check
from .evolution import AdjointProblem, ForwardProblem, solve_adjoint, solve_forward, energy_report
from .carleman import (
    CarlemanContext,
    admissibility_report,
    carleman_sides,
    identity_residual,
    ratio_sweep,
    validate_context,
)
from .control import (
    ControlTask,
    apply_B,
    duality_gap,
    reduce_initial,
    riesz_h10,
    synthesize,
    two_stage_control,
)

__version__ = "0.1.0"
