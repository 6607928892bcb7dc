"""Second-order obstacle avoidance by lifting first-order planners.

Dynamic damping feedback (DDF) and velocity tracking feedback (VTF) turn a
safe velocity field ``v_d(x)`` into an acceleration command for a double
integrator.  The package also ships navigation-function planners, exact
obstacle distances, an RK4 simulator and equilibrium analysis tools.
"""

from .analysis import (
    AssumptionReport,
    Equilibrium,
    EquilibriumKind,
    assemble_jacobian_ddf,
    assemble_jacobian_vtf,
    check_assumptions,
    classify_equilibrium,
    find_equilibria,
)
from .controllers import (
    ControllerConfig,
    ControllerKind,
    DampingSchedule,
    beta,
    ddf_control,
    fixed_damping_control,
    kd_lower_bound,
    make_controller,
    vtf_control,
)
from .errors import *  # noqa: F401,F403
from .geometry import (
    BoundarySphere,
    Ellipsoid,
    Sphere,
    WorldModel,
    distance_to_obstacle,
    fd_hessian_of_distance,
    safety_margin,
)
from .linalg import eigenvalues_dense
from .planners import (
    ModifiedPlanner,
    ModifiedPlannerParams,
    NavigationFunctionPlanner,
    NfPlannerParams,
    PlannerEval,
    hi_smooth,
    modified_planner_eval,
    nf_planner_eval,
    nf_potential,
    phi1_smoothstep,
)
from .scenario_io import Scenario, load_scenario, write_trajectory_csv
from .simulation import (
    IntegratorConfig,
    Metrics,
    Outcome,
    State,
    Trajectory,
    batch_run,
    compute_metrics,
    path_length,
    simulate,
    step,
)

__version__ = "0.1.0"
