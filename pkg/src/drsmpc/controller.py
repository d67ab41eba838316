"""Receding-horizon tube controller with binary nominal-state initialization.

At every step two programs may be solved:

* Strategy 1 resets the nominal state to the measurement, ``xbar = x_k``,
  with zero initial error covariance;
* Strategy 2 keeps the previous plan's one-step prediction
  ``xbar = A xbar_{k-1} + B ubar*_{k-1}`` and carries the error covariance
  ``(A+BK) Sigma0_{k-1} (A+BK)^T + W``.

Strategy 2 is used when Strategy 1 is infeasible or strictly more
expensive. The applied input is ``u_k = K (x_k - xbar_k) + ubar*_0``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BothInfeasible, InitialInfeasible
from .linalg import symmetrize
from .ocp import INFEASIBLE, OcpBuilder, OcpSolution

S1 = "S1"
S2 = "S2"


@dataclass(frozen=True)
class ControllerState:
    """Controller memory between steps.

    ``xbar`` and ``Sigma0`` are the Strategy-2 candidates for step ``k``
    (at ``k = 0`` the measured state and zero).
    """

    k: int
    xbar: np.ndarray
    Sigma0: np.ndarray
    lastSolution: OcpSolution = None
    method: str = "dr"


@dataclass(frozen=True)
class StepOutcome:
    input: np.ndarray
    strategy: str
    cost: float
    feasibleS1: bool
    feasibleS2: bool
    xbar: np.ndarray
    Sigma0: np.ndarray
    solution: OcpSolution
    costS1: float = np.inf
    costS2: float = np.inf


def select_strategy(feasibleS1, feasibleS2, costS1, costS2):
    """Pick ``"S1"`` or ``"S2"``; ``None`` when neither is feasible. Ties go to S1."""
    if not feasibleS1:
        return S2 if feasibleS2 else None
    if feasibleS2 and costS1 > costS2:
        return S2
    return S1


class Controller:
    """Stepping interface shared by the DR controller and both baselines.

    Parameters
    ----------
    model, cost, constraints, artifacts
        Scenario data and offline synthesis results.
    method : {"dr", "gauss", "cantelli"}
    form : {"conic", "condensed"}, optional
        Program form; defaults to conic for ``"dr"`` and condensed otherwise.
    input_tightening : {"feedback", "nominal"}
    """

    def __init__(self, model, cost, constraints, artifacts, method="dr", form=None,
                 input_tightening="feedback"):
        self.model = model
        self.cost = cost
        self.constraints = tuple(constraints)
        self.artifacts = artifacts
        self.method = method
        self.builder = OcpBuilder(model, cost, constraints, artifacts, method, form, input_tightening)

    def init(self, x0):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        sol = self.builder.solve(x0, None)
        if not sol.feasible:
            raise InitialInfeasible(f"Strategy-1 program infeasible at x0 = {x0.tolist()} ({sol.detail})")
        return ControllerState(0, x0, np.zeros((self.model.n_x, self.model.n_x)), None, self.method)

    def step(self, state, xk):
        """One pass of the online loop. Returns ``(StepOutcome, next state)``."""
        xk = np.asarray(xk, dtype=float).reshape(-1)
        sol1 = self.builder.solve(xk, None)
        if state.k == 0:
            sol2 = OcpSolution(INFEASIBLE, detail="no previous plan")
        else:
            sol2 = self.builder.solve(state.xbar, state.Sigma0)
        choice = select_strategy(sol1.feasible, sol2.feasible, sol1.cost, sol2.cost)
        if choice is None:
            raise BothInfeasible(state.k, sol1.detail or sol1.status, sol2.detail or sol2.status)
        if choice == S1:
            sol, xbar, Sigma0 = sol1, xk, np.zeros_like(state.Sigma0)
        else:
            sol, xbar, Sigma0 = sol2, state.xbar, state.Sigma0
        ubar0 = sol.nominalInputs[0]
        u = self.artifacts.K @ (xk - xbar) + ubar0
        A, B, Acl = self.model.A, self.model.B, self.artifacts.Acl
        nxt = ControllerState(
            state.k + 1,
            A @ xbar + B @ ubar0,
            symmetrize(Acl @ Sigma0 @ Acl.T + self.artifacts.W),
            sol,
            self.method,
        )
        out = StepOutcome(u, choice, sol.cost, sol1.feasible, sol2.feasible, xbar, Sigma0, sol,
                          sol1.cost, sol2.cost)
        return out, nxt


def init(model, cost, constraints, artifacts, x0, method="dr", **kw):
    """Create a controller and its initial state; see :class:`Controller`."""
    ctrl = Controller(model, cost, constraints, artifacts, method, **kw)
    return ctrl, ctrl.init(x0)


def step(controller, state, xk):
    return controller.step(state, xk)


def baseline_step(controller, state, xk, method):
    """Step a Gaussian or Cantelli controller; ``method`` must match the controller."""
    if method not in ("gauss", "cantelli"):
        raise ValueError(f"baseline method must be 'gauss' or 'cantelli', got {method!r}")
    if controller.method != method:
        raise ValueError(f"controller was built for {controller.method!r}, not {method!r}")
    return controller.step(state, xk)
