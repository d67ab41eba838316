"""Distributionally robust stochastic MPC with two-sided chance constraints.

The controller keeps a nominal trajectory inside slabs tightened so that
each two-sided constraint holds with the requested probability for every
noise law with the given mean and covariance. A fixed tube gain keeps the
true state near the nominal one.

Modules
-------
linalg       Riccati/Lyapunov synthesis of the tube gain and covariances.
tightening   Slab radii (distributionally robust, Gaussian, Cantelli), the
             worst-case oracle and the terminal-set certificate.
ocp          Finite-horizon program in conic or condensed form (Clarabel).
controller   Receding-horizon loop with the two-strategy initialization.
scenarios    Built-in plants and YAML scenario files.
sim          Seeded Monte Carlo, violation statistics, feasible-set scans.
"""

from .controller import Controller, ControllerState, StepOutcome, select_strategy
from .errors import (
    BothInfeasible,
    DRSMPCError,
    InitialInfeasible,
    NonDiagonalLaplace,
    NonSymmetric,
    NotSchurStable,
    SolverError,
    StageInfeasible,
    SynthesisFailed,
    TighteningInfeasible,
)
from .linalg import (
    CostSpec,
    SynthesisArtifacts,
    SystemModel,
    propagate_covariance,
    solve_discrete_lyapunov,
    steady_state_covariance,
    synthesize,
    synthesize_gain,
)
from .ocp import OcpBuilder, OcpSolution, build_condensed, build_program, solve_program
from .scenarios import NoiseSpec, Scenario, buck_boost, builtin_scenarios, load_scenario, save_scenario, two_mass_spring
from .sim import feasible_set_scan, monte_carlo, simulate_run
from .tightening import (
    TwoSidedConstraint,
    certify_terminal,
    slab_radius_cantelli,
    slab_radius_dr,
    slab_radius_gaussian,
    stage_radii,
    terminal_set,
    worst_case_violation,
)

__version__ = "0.1.0"
