"""Discrete singular stochastic control: dynamics, duality and solvers."""

from .instances import (
    bk_conditions_check,
    build_bk_instance,
    build_ls_instance,
    capped_quadratic_utility,
    default_bk_instance,
    default_tree,
    ls_cost,
    random_instance,
    random_walk,
)
from .problem import (
    AdjointState,
    ControlProblem,
    HamiltonianEval,
    KKTReport,
    Trajectory,
    adjoint_dynamics,
    dual_objective,
    forward_dynamics,
    hamiltonian,
    hamiltonian_argmin,
    kkt_check,
    linear_response,
    pairing_identity_check,
    primal_objective,
    projected_adjoint,
    recession_argmin,
    zero_control_trajectory,
)
from .solver import (
    DualSolution,
    PrimalSolution,
    SingularControlSolver,
    SolveResult,
    make_dual,
    make_primal,
    solve,
    solve_dual,
    solve_primal,
)
