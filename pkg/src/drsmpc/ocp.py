"""Finite-horizon tube MPC programs.

Two equivalent forms of the same optimal control problem:

``conic``
    Nominal states and inputs as variables, and an auxiliary pair
    ``(y, lam)`` for every chance-constrained row at every stage, with
    ``||(y, s)|| <= sqrt(eps) (b - lam)``, ``|d^T v| <= y + lam``,
    ``0 <= lam <= b``, ``y >= 0``.
``condensed``
    Each chance-constrained row replaced by its precomputed slab
    ``|d^T v| <= r``. Used by the Gaussian and Cantelli baselines and as a
    cross-check of the conic form.

Both are handed to Clarabel as ``min 1/2 z'Pz + q'z  s.t.  Az + s = b,
s in K``. The decision-independent trace terms of the expected cost are
added outside the solver.
"""

from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import optimize, sparse

from .errors import SolverError, StageInfeasible, TighteningInfeasible
from .linalg import propagate_covariance
from .tightening import INPUT, STATE, constraint_variance, radius_rule, stage_radii

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
SOLVER_ERROR = "solver_error"

FEAS_TOL = 1e-6

_OK = {"Solved", "AlmostSolved"}
_INFEAS = {"PrimalInfeasible", "AlmostPrimalInfeasible"}
_STALLED = {"MaxIterations", "NumericalError", "InsufficientProgress"}


def _settings(tight=True):
    s = clarabel.DefaultSettings()
    s.verbose = False
    if tight:
        s.tol_gap_abs = 1e-9
        s.tol_gap_rel = 1e-9
        s.tol_feas = 1e-9
    s.max_iter = 200
    return s


@dataclass
class ConicProgram:
    """Problem data in Clarabel's standard form plus the variable layout."""

    P: sparse.csc_matrix
    q: np.ndarray
    A: sparse.csc_matrix
    b: np.ndarray
    cones: list
    layout: dict
    trace_constant: float
    Sigmas: tuple
    form: str
    checks: dict = field(repr=False, default_factory=dict)

    @property
    def n_variables(self):
        return self.A.shape[1]

    def hessian_min_eig(self):
        P = self.P.toarray()
        P = np.triu(P) + np.triu(P, 1).T
        return float(np.linalg.eigvalsh(P).min())


@dataclass
class OcpSolution:
    status: str
    nominalInputs: np.ndarray = None
    nominalStates: np.ndarray = None
    auxiliaries: dict = None
    cost: float = np.inf
    nominal_cost: float = np.inf
    trace_constant: float = 0.0
    Sigmas: tuple = None
    detail: str = ""

    @property
    def feasible(self):
        return self.status == OPTIMAL


def trace_constant(cost, artifacts, Sigmas):
    """``sum_l tr((Q + K'RK) Sigma_l) + tr(S Sigma_N)``."""
    K = artifacts.K
    QK = cost.Q + K.T @ cost.R @ K
    N = len(Sigmas) - 1
    return float(sum(np.trace(QK @ Sigmas[l]) for l in range(N)) + np.trace(artifacts.S @ Sigmas[N]))


def nominal_cost(cost, S, xs, us):
    xs = np.asarray(xs)
    us = np.asarray(us)
    N = len(us)
    val = sum(xs[l] @ cost.Q @ xs[l] + us[l] @ cost.R @ us[l] for l in range(N))
    return float(val + xs[N] @ S @ xs[N])


def evaluate_cost(solution, artifacts, Sigmas, cost):
    """Expected cost of a nominal plan: quadratic part plus trace constants."""
    return nominal_cost(cost, artifacts.S, solution.nominalStates, solution.nominalInputs) + \
        trace_constant(cost, artifacts, Sigmas)


class OcpBuilder:
    """Reusable program builder for a fixed scenario, method and form.

    The constraint matrix depends only on the scenario; each call to
    :meth:`program` fills in the initial nominal state and the
    covariance-dependent constants.

    Parameters
    ----------
    model, cost, constraints, artifacts
        Scenario data and offline synthesis results.
    method : {"dr", "gauss", "cantelli"}
        Tightening rule. The conic form is only defined for ``"dr"``.
    form : {"conic", "condensed"}
    input_tightening : {"feedback", "nominal"}
    """

    def __init__(self, model, cost, constraints, artifacts, method="dr", form=None,
                 input_tightening="feedback"):
        if form is None:
            form = "conic" if method == "dr" else "condensed"
        if form not in ("conic", "condensed"):
            raise ValueError(f"unknown form {form!r}")
        if form == "conic" and method != "dr":
            raise ValueError("the conic form encodes the moment-ambiguity set only; use form='condensed'")
        radius_rule(method)
        self.model = model
        self.cost = cost
        self.constraints = tuple(constraints)
        self.artifacts = artifacts
        self.method = method
        self.form = form
        self.input_tightening = input_tightening
        for con in self.constraints:
            dim = model.n_x if con.kind == STATE else model.n_u
            if con.direction.shape != (dim,):
                raise ValueError(f"{con.kind} constraint direction must have length {dim}")
        self.state_idx = [i for i, c in enumerate(self.constraints) if c.kind == STATE]
        self.input_idx = [i for i, c in enumerate(self.constraints) if c.kind == INPUT]
        self._build_static()

    # layout -------------------------------------------------------------
    def _u(self, l):
        n_u = self.model.n_u
        return slice(l * n_u, (l + 1) * n_u)

    def _x(self, l):
        n_x = self.model.n_x
        off = self.cost.N * self.model.n_u
        return slice(off + l * n_x, off + (l + 1) * n_x)

    def _build_static(self):
        n_x, n_u, N = self.model.n_x, self.model.n_u, self.cost.N
        ns, ni = len(self.state_idx), len(self.input_idx)
        x0 = N * n_u
        nz = x0 + (N + 1) * n_x
        layout = {"u": slice(0, x0), "x": slice(x0, nz)}

        # rows touched by each chance constraint: (constraint index, stage, variable slice)
        rows = []
        for l in range(N):
            for i in self.state_idx:
                rows.append((i, l, self._x(l)))
            for i in self.input_idx:
                rows.append((i, l, self._u(l)))
        for i in self.state_idx:
            rows.append((i, "terminal", self._x(N)))
        self._rows = rows

        if self.form == "conic":
            aux0 = nz
            nz += 2 * len(rows)
            layout["aux"] = slice(aux0, nz)
            self._aux = [(aux0 + 2 * k, aux0 + 2 * k + 1) for k in range(len(rows))]
        self.nz = nz
        self.layout = layout
        assert nz == N * n_u + (N + 1) * n_x + (
            2 * ns * N + 2 * ni * N + 2 * ns if self.form == "conic" else 0)

        # objective
        S = self.artifacts.S
        blocks = [self.cost.R] * N + [self.cost.Q] * N + [S]
        H = sparse.block_diag(blocks, format="csc")
        if self.form == "conic":
            H = sparse.block_diag([H, sparse.csc_matrix((nz - H.shape[0], nz - H.shape[0]))], format="csc")
        self.P = sparse.triu(2.0 * H, format="csc")
        self.q = np.zeros(nz)

        A, B = self.model.A, self.model.B
        I = sparse.identity(n_x, format="csr")
        # zero cone: x_0 = xbar0, x_{l+1} - A x_l - B u_l = 0
        eq = sparse.lil_matrix(((N + 1) * n_x, nz))
        eq[0:n_x, self._x(0)] = I
        for l in range(N):
            r = slice((l + 1) * n_x, (l + 2) * n_x)
            eq[r, self._x(l + 1)] = I
            eq[r, self._x(l)] = -A
            eq[r, self._u(l)] = -B
        self.n_eq = (N + 1) * n_x

        if self.form == "conic":
            n_lin = 5 * len(rows)
            lin = sparse.lil_matrix((n_lin, nz))
            soc = sparse.lil_matrix((3 * len(rows), nz))
            lin_b = np.zeros(n_lin)
            soc_b_static = np.zeros(3 * len(rows))
            for k, (i, l, sl) in enumerate(rows):
                con = self.constraints[i]
                iy, il = self._aux[k]
                d = con.direction
                lin[5 * k, sl] = d
                lin[5 * k, iy] = -1.0
                lin[5 * k, il] = -1.0
                lin[5 * k + 1, sl] = -d
                lin[5 * k + 1, iy] = -1.0
                lin[5 * k + 1, il] = -1.0
                lin[5 * k + 2, iy] = -1.0
                lin[5 * k + 3, il] = -1.0
                lin[5 * k + 4, il] = 1.0
                lin_b[5 * k + 4] = con.bound
                sp = np.sqrt(con.epsilon)
                soc[3 * k, il] = sp
                soc_b_static[3 * k] = sp * con.bound
                soc[3 * k + 1, iy] = -1.0
            self.A = sparse.vstack([eq.tocsc(), lin.tocsc(), soc.tocsc()], format="csc")
            self._lin_b = lin_b
            self._soc_b_static = soc_b_static
            self.n_lin = n_lin
            self.cones = [clarabel.ZeroConeT(self.n_eq), clarabel.NonnegativeConeT(n_lin)] + \
                [clarabel.SecondOrderConeT(3) for _ in rows]
        else:
            n_lin = 2 * len(rows)
            lin = sparse.lil_matrix((n_lin, nz))
            for k, (i, l, sl) in enumerate(rows):
                d = self.constraints[i].direction
                lin[2 * k, sl] = d
                lin[2 * k + 1, sl] = -d
            self.A = sparse.vstack([eq.tocsc(), lin.tocsc()], format="csc")
            self.n_lin = n_lin
            self.cones = [clarabel.ZeroConeT(self.n_eq), clarabel.NonnegativeConeT(n_lin)]

    # per-solve data -------------------------------------------------------
    def covariances(self, Sigma0=None):
        if Sigma0 is None:
            return self.artifacts.Sigma
        return propagate_covariance(Sigma0, self.artifacts.Acl, self.artifacts.W, self.cost.N)

    def _variances(self, Sigmas):
        K = self.artifacts.K
        out = []
        for i, l, _ in self._rows:
            con = self.constraints[i]
            Sig = self.artifacts.SigmaBar if l == "terminal" else Sigmas[l]
            it = "feedback" if l == "terminal" and con.kind == STATE else self.input_tightening
            out.append(constraint_variance(con, Sig, K, it))
        return np.array(out)

    def program(self, xbar0, Sigma0=None):
        """Assemble the program for one solve.

        Raises
        ------
        StageInfeasible
            When some tightening is empty (variance above ``eps * b^2``);
            the solver is never called in that case.
        """
        xbar0 = np.asarray(xbar0, dtype=float).reshape(-1)
        if xbar0.shape != (self.model.n_x,):
            raise ValueError(f"initial state must have length {self.model.n_x}")
        Sigmas = self.covariances(Sigma0)
        var = self._variances(Sigmas)
        rule = radius_rule(self.method)
        radii = np.empty(len(self._rows))
        for k, (i, l, _) in enumerate(self._rows):
            con = self.constraints[i]
            try:
                radii[k] = rule(var[k], con.bound, con.epsilon)
            except TighteningInfeasible:
                raise StageInfeasible(i, l) from None
        b_eq = np.zeros(self.n_eq)
        b_eq[: self.model.n_x] = xbar0
        if self.form == "conic":
            soc_b = self._soc_b_static.copy()
            soc_b[2::3] = np.sqrt(np.maximum(var, 0.0))
            b = np.concatenate([b_eq, self._lin_b, soc_b])
        else:
            b = np.concatenate([b_eq, np.repeat(radii, 2)])
        checks = {"variance": var, "radii": radii, "xbar0": xbar0}
        return ConicProgram(self.P, self.q, self.A, b, self.cones, self.layout,
                            trace_constant(self.cost, self.artifacts, Sigmas), Sigmas,
                            self.form, checks)

    def presolve(self, prog):
        """Index of a stage-0 state row already violated by ``xbar0``, else ``None``.

        These rows involve no decision variable, so they are decided here
        rather than left to the solver's infeasibility detection.
        """
        x0 = prog.checks["xbar0"]
        for k, (i, l, _) in enumerate(self._rows):
            con = self.constraints[i]
            if l == 0 and con.kind == STATE:
                if abs(con.direction @ x0) > prog.checks["radii"][k] + 1e-9 * max(1.0, con.bound):
                    return i
        return None

    def solve(self, xbar0, Sigma0=None):
        """Build and solve; an empty tightening is reported as infeasible."""
        try:
            prog = self.program(xbar0, Sigma0)
        except StageInfeasible as exc:
            return OcpSolution(INFEASIBLE, detail=str(exc),
                               trace_constant=np.nan)
        i = self.presolve(prog)
        if i is not None:
            return OcpSolution(INFEASIBLE, detail=f"initial state violates constraint {i}",
                               trace_constant=prog.trace_constant, Sigmas=prog.Sigmas)
        return solve_program(prog, self)

    def feasibility_lp(self, prog):
        """Decide feasibility of the slab polyhedron with HiGHS.

        Both forms share the same feasible nominal trajectories (the
        auxiliaries collapse to the closed-form radii), so one LP serves as
        the fallback certificate when the conic solver stalls. Returns the
        ``scipy`` status: 0 feasible, 2 infeasible.
        """
        n_core = self.cost.N * self.model.n_u + (self.cost.N + 1) * self.model.n_x
        A_eq = prog.A[: self.n_eq, :n_core]
        b_eq = prog.b[: self.n_eq]
        rows = sparse.lil_matrix((2 * len(self._rows), n_core))
        for k, (i, _, sl) in enumerate(self._rows):
            d = self.constraints[i].direction
            rows[2 * k, sl] = d
            rows[2 * k + 1, sl] = -d
        b_ub = np.repeat(prog.checks["radii"], 2)
        res = optimize.linprog(np.zeros(n_core), A_ub=rows.tocsr(), b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                               bounds=[(None, None)] * n_core, method="highs")
        return res.status

    # verification ---------------------------------------------------------
    def residuals(self, sol, prog):
        """Independent feasibility residuals of a solution (max violation)."""
        xs, us = sol.nominalStates, sol.nominalInputs
        A, B = self.model.A, self.model.B
        dyn = max(
            [np.max(np.abs(xs[0] - prog.checks["xbar0"]))]
            + [np.max(np.abs(xs[l + 1] - A @ xs[l] - B @ us[l])) for l in range(len(us))]
        )
        viol = 0.0
        for k, (i, l, _) in enumerate(self._rows):
            con = self.constraints[i]
            if l == "terminal":
                v = xs[-1]
            else:
                v = xs[l] if con.kind == STATE else us[l]
            m = float(con.direction @ v)
            if self.form == "conic":
                y, lam = sol.auxiliaries["y"][k], sol.auxiliaries["lam"][k]
                s2 = prog.checks["variance"][k]
                viol = max(viol, abs(m) - y - lam, -y, -lam, lam - con.bound,
                           np.hypot(y, np.sqrt(max(s2, 0.0))) - np.sqrt(con.epsilon) * (con.bound - lam))
            else:
                viol = max(viol, abs(m) - prog.checks["radii"][k])
        return float(dyn), float(viol)


def build_program(model, cost, constraints, artifacts, xbar0, Sigma0=None, input_tightening="feedback"):
    """Moment-ambiguity conic program for one initial nominal state and covariance."""
    return OcpBuilder(model, cost, constraints, artifacts, "dr", "conic",
                      input_tightening).program(xbar0, Sigma0)


def build_condensed(model, cost, constraints, artifacts, xbar0, Sigma0=None, method="dr",
                    input_tightening="feedback"):
    """Slab-form program with radii precomputed by ``method``."""
    return OcpBuilder(model, cost, constraints, artifacts, method, "condensed",
                      input_tightening).program(xbar0, Sigma0)


def solve_program(prog, builder=None):
    """Solve with Clarabel and translate the result.

    ``builder`` (the :class:`OcpBuilder` that produced ``prog``) enables an
    independent residual check; a solution that fails it raises
    :class:`SolverError` rather than being returned. If Clarabel stalls
    twice, the builder's HiGHS feasibility LP may still certify
    infeasibility; otherwise the stall is raised as :class:`SolverError`.
    """
    res = clarabel.DefaultSolver(prog.P, prog.q, prog.A, prog.b, prog.cones, _settings()).solve()
    status = str(res.status)
    if status in _STALLED:
        # tight gap tolerances occasionally stall near the boundary of the
        # feasible set; the default ones still pass the residual check below
        res = clarabel.DefaultSolver(prog.P, prog.q, prog.A, prog.b, prog.cones, _settings(False)).solve()
        status = str(res.status)
    if status in _INFEAS:
        return OcpSolution(INFEASIBLE, detail=status, trace_constant=prog.trace_constant,
                           Sigmas=prog.Sigmas)
    if status in _STALLED and builder is not None and builder.feasibility_lp(prog) == 2:
        return OcpSolution(INFEASIBLE, detail=f"infeasible (LP certificate after {status})",
                           trace_constant=prog.trace_constant, Sigmas=prog.Sigmas)
    if status not in _OK:
        raise SolverError(f"solver returned {status}")
    z = np.asarray(res.x)
    lay = prog.layout
    us = z[lay["u"]]
    xs = z[lay["x"]]
    n_x = prog.checks["xbar0"].shape[0]
    xs = xs.reshape(-1, n_x)
    us = us.reshape(len(xs) - 1, -1)
    aux = None
    if "aux" in lay:
        a = z[lay["aux"]]
        aux = {"y": a[0::2].copy(), "lam": a[1::2].copy()}
    nom = float(res.obj_val)
    sol = OcpSolution(OPTIMAL, us, xs, aux, nom + prog.trace_constant, nom, prog.trace_constant,
                      prog.Sigmas, status)
    if builder is not None:
        dyn, viol = builder.residuals(sol, prog)
        if dyn > FEAS_TOL or viol > FEAS_TOL:
            if status == "AlmostSolved":
                raise SolverError(f"inaccurate solution (dynamics {dyn:.2e}, constraints {viol:.2e})")
            raise SolverError(f"solution violates constraints (dynamics {dyn:.2e}, constraints {viol:.2e})")
        sol.nominal_cost = nominal_cost(builder.cost, builder.artifacts.S, xs, us)
        sol.cost = sol.nominal_cost + prog.trace_constant
    return sol
