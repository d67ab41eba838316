"""Closed-loop simulation, Monte Carlo statistics and feasible-set scans."""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .controller import S2, Controller
from .errors import BothInfeasible
from .ocp import OcpBuilder
from .scenarios import GAUSSIAN, LAPLACE

COMPLETED = "completed"


def _fmt(v):
    return format(float(v), ".17g")


def noise_factor(cov):
    """``L`` with ``L L^T = cov``; tolerant of semidefinite ``cov``."""
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_noise(spec, rng, size=None, channel=None):
    """Draw disturbances; mapped through ``channel`` when one is given.

    Gaussian draws are ``L z`` with ``z`` standard normal; Laplace components
    are independent with scale ``sqrt(var / 2)``.
    """
    n = spec.covariance.shape[0]
    shape = (n,) if size is None else (size, n)
    if spec.family == GAUSSIAN:
        z = rng.standard_normal(shape)
        w = z @ noise_factor(spec.covariance).T
    elif spec.family == LAPLACE:
        scale = np.sqrt(np.diag(spec.covariance) / 2.0)
        w = rng.laplace(0.0, 1.0, shape) * scale
    else:
        raise ValueError(f"unknown noise family {spec.family!r}")
    if channel is not None:
        w = w @ np.asarray(channel).T
    return w


@dataclass
class RunRecord:
    """One closed-loop trajectory.

    Arrays indexed by step ``k`` have length ``T`` (inputs and controller
    data) or ``T + 1`` (states and violation flags). A run that hits
    :class:`BothInfeasible` is truncated and ``termination`` reads
    ``"both_infeasible@k"``.
    """

    seed: int
    method: str
    states: np.ndarray
    inputs: np.ndarray
    nominal: np.ndarray
    nominalInputs: np.ndarray
    Sigma0: np.ndarray
    strategies: list
    costs: np.ndarray
    feasibleS1: np.ndarray
    feasibleS2: np.ndarray
    violations: np.ndarray
    termination: str = COMPLETED

    @property
    def completed(self):
        return self.termination == COMPLETED

    @property
    def steps(self):
        return len(self.inputs)


def _violations(states, constraints):
    D = np.array([c.direction for c in constraints]).reshape(len(constraints), -1)
    b = np.array([c.bound for c in constraints])
    if len(constraints) == 0:
        return np.zeros((len(states), 0), dtype=bool)
    return np.abs(states @ D.T) > b


def simulate_run(scenario, method="dr", seed=0, steps=None, artifacts=None, controller=None, form=None):
    """Simulate the plant under the receding-horizon controller.

    The plant is driven by true noise draws from ``scenario.noise`` (seeded
    by ``seed``); the controller only knows the covariance.

    Raises
    ------
    InitialInfeasible
        If the first Strategy-1 program is infeasible.
    """
    T = scenario.steps if steps is None else int(steps)
    if controller is None:
        art = scenario.synthesize() if artifacts is None else artifacts
        controller = Controller(scenario.model, scenario.cost, scenario.constraints, art, method,
                                form, scenario.input_tightening)
    art = controller.artifacts
    model = scenario.model
    rng = np.random.default_rng(seed)
    noise = sample_noise(scenario.noise, rng, size=T, channel=model.E) if T > 0 else np.zeros((0, model.n_x))

    n_x, n_u = model.n_x, model.n_u
    xs = np.zeros((T + 1, n_x))
    us = np.zeros((T, n_u))
    xbars = np.zeros((T, n_x))
    ubars = np.zeros((T, n_u))
    sig0 = np.zeros((T, n_x, n_x))
    costs = np.zeros(T)
    f1 = np.zeros(T, dtype=bool)
    f2 = np.zeros(T, dtype=bool)
    strategies = []
    termination = COMPLETED
    x = scenario.x0.copy()
    xs[0] = x
    state = controller.init(x)
    k_done = T
    for k in range(T):
        try:
            out, state = controller.step(state, x)
        except BothInfeasible as exc:
            termination = f"both_infeasible@{exc.k}"
            k_done = k
            break
        us[k] = out.input
        xbars[k] = out.xbar
        ubars[k] = out.solution.nominalInputs[0]
        sig0[k] = out.Sigma0
        costs[k] = out.cost
        f1[k], f2[k] = out.feasibleS1, out.feasibleS2
        strategies.append(out.strategy)
        x = model.A @ x + model.B @ out.input + noise[k]
        xs[k + 1] = x
    sc = scenario.stateConstraints
    if k_done < T:
        xs, us, xbars, ubars, sig0 = xs[: k_done + 1], us[:k_done], xbars[:k_done], ubars[:k_done], sig0[:k_done]
        costs, f1, f2 = costs[:k_done], f1[:k_done], f2[:k_done]
    return RunRecord(seed, method, xs, us, xbars, ubars, sig0, strategies, costs, f1, f2,
                     _violations(xs, sc), termination)


@dataclass
class ViolationStats:
    """Per-step violation counts across runs.

    ``perStepCounts[k, i]`` counts runs whose state violates constraint
    ``i`` at step ``k``; ``anyCounts[k]`` counts runs violating any state
    constraint at step ``k``. ``maxCount`` is the maximum of ``anyCounts``.
    """

    runs: int
    perStepCounts: np.ndarray
    anyCounts: np.ndarray

    @property
    def maxCount(self):
        return int(self.anyCounts.max()) if self.anyCounts.size else 0

    @property
    def empiricalRate(self):
        return self.maxCount / self.runs

    @property
    def maxPerConstraint(self):
        return self.perStepCounts.max(axis=0)


@dataclass
class MonteCarloResult:
    scenario: object
    method: str
    records: list
    stats: ViolationStats
    meanStageCost: np.ndarray
    traceSW: float
    artifacts: object = field(repr=False, default=None)

    @property
    def terminated(self):
        return [r for r in self.records if not r.completed]

    def mean_terminal_cost(self, window=20):
        tail = self.meanStageCost[-window:]
        return float(np.mean(tail)) if tail.size else float("nan")


def stage_costs(record, cost):
    xs, us = record.states[: len(record.inputs)], record.inputs
    return np.einsum("ki,ij,kj->k", xs, cost.Q, xs) + np.einsum("ki,ij,kj->k", us, cost.R, us)


def violation_stats(records, n_steps, n_cons):
    per = np.zeros((n_steps + 1, n_cons), dtype=int)
    anyc = np.zeros(n_steps + 1, dtype=int)
    for r in records:
        v = r.violations
        per[: len(v)] += v
        anyc[: len(v)] += v.any(axis=1)
    return ViolationStats(len(records), per, anyc)


def _run_chunk(args):
    scenario, method, seeds, steps, form = args
    art = scenario.synthesize()
    ctrl = Controller(scenario.model, scenario.cost, scenario.constraints, art, method, form,
                      scenario.input_tightening)
    return [simulate_run(scenario, method, s, steps, controller=ctrl) for s in seeds]


def monte_carlo(scenario, method="dr", runs=1000, base_seed=0, jobs=1, steps=None, form=None):
    """Run ``runs`` seeded closed-loop simulations (run ``i`` uses ``base_seed + i``).

    Results are reduced in run order, so the output does not depend on
    ``jobs``.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    T = scenario.steps if steps is None else int(steps)
    seeds = [base_seed + i for i in range(runs)]
    art = scenario.synthesize()
    if jobs <= 1:
        records = _run_chunk((scenario, method, seeds, T, form))
    else:
        chunks = [seeds[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_run_chunk, [(scenario, method, c, T, form) for c in chunks]))
        by_seed = {r.seed: r for part in parts for r in part}
        records = [by_seed[s] for s in seeds]
    stats = violation_stats(records, T, len(scenario.stateConstraints))
    total = np.zeros(T)
    count = np.zeros(T)
    for r in records:
        c = stage_costs(r, scenario.cost)
        total[: len(c)] += c
        count[: len(c)] += 1
    mean_cost = np.divide(total, count, out=np.full(T, np.nan), where=count > 0)
    return MonteCarloResult(scenario, method, records, stats, mean_cost,
                            float(np.trace(art.S @ art.W)), art)


# ---------------------------------------------------------------------------
# property audits on recorded runs


def recursive_feasibility_breaks(record):
    """Steps ``k`` where Strategy 2 was feasible at ``k`` but not at ``k + 1``."""
    out = [k for k in range(record.steps - 1) if record.feasibleS2[k] and not record.feasibleS2[k + 1]]
    if not record.completed and record.steps > 0 and record.feasibleS2[-1]:
        out.append(record.steps - 1)
    return out


def cost_decrease_gaps(record, scenario, artifacts):
    """Slack of the one-step cost-decrease bound on Strategy-2 steps.

    For each ``k`` with Strategy 2 chosen at ``k + 1`` returns
    ``(J_{k+1} - J_k) - (-xbar'Q xbar - ubar'R ubar - tr((Q+K'RK) Sigma0) + tr(SW))``;
    the bound holds where the value is ``<= 0``.
    """
    Q, R = scenario.cost.Q, scenario.cost.R
    K, S, W = artifacts.K, artifacts.S, artifacts.W
    QK = Q + K.T @ R @ K
    trSW = float(np.trace(S @ W))
    gaps = []
    for k in range(record.steps - 1):
        if record.strategies[k + 1] != S2:
            continue
        xb, ub = record.nominal[k], record.nominalInputs[k]
        rhs = -xb @ Q @ xb - ub @ R @ ub - np.trace(QK @ record.Sigma0[k]) + trSW
        gaps.append((k, float(record.costs[k + 1] - record.costs[k] - rhs)))
    return gaps


# ---------------------------------------------------------------------------
# feasible initial sets


def parse_grid(spec):
    """``"x1min:x1max:step,x2min:x2max:step"`` -> two coordinate arrays."""
    axes = []
    for part in spec.split(","):
        lo, hi, step = (float(t) for t in part.split(":"))
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        axes.append(lo + step * np.arange(n))
    if len(axes) != 2:
        raise ValueError("grid spec needs exactly two axes")
    return axes[0], axes[1]


@dataclass
class FeasibleSet:
    x1: np.ndarray
    x2: np.ndarray
    mask: np.ndarray
    method: str

    @property
    def cell_area(self):
        d1 = self.x1[1] - self.x1[0] if len(self.x1) > 1 else 1.0
        d2 = self.x2[1] - self.x2[0] if len(self.x2) > 1 else 1.0
        return float(d1 * d2)

    @property
    def count(self):
        return int(self.mask.sum())

    @property
    def area(self):
        return self.count * self.cell_area


def feasible_set_scan(scenario, method="dr", grid=None, dims=(0, 1), base=None, artifacts=None, form=None):
    """Feasibility of the Strategy-1 program over a 2-D grid of initial nominal states.

    ``grid`` is a pair of coordinate arrays or a spec string for
    :func:`parse_grid`. Coordinates outside ``dims`` are taken from
    ``base`` (zero by default).
    """
    if grid is None:
        grid = "-2.5:2.5:0.05,-3.5:3.5:0.05"
    x1, x2 = parse_grid(grid) if isinstance(grid, str) else (np.asarray(grid[0]), np.asarray(grid[1]))
    art = scenario.synthesize() if artifacts is None else artifacts
    builder = OcpBuilder(scenario.model, scenario.cost, scenario.constraints, art, method, form,
                         scenario.input_tightening)
    point = np.zeros(scenario.model.n_x) if base is None else np.asarray(base, dtype=float).copy()
    mask = np.zeros((len(x1), len(x2)), dtype=bool)
    for i, a in enumerate(x1):
        for j, c in enumerate(x2):
            point[dims[0]], point[dims[1]] = a, c
            mask[i, j] = builder.solve(point).feasible
    return FeasibleSet(x1, x2, mask, method)


# ---------------------------------------------------------------------------
# CSV / text output


def write_runs_csv(result, path):
    sc = result.scenario
    n_x, n_u = sc.model.n_x, sc.model.n_u
    n_c = len(sc.stateConstraints)
    header = (["run", "seed", "step"] + [f"x{i + 1}" for i in range(n_x)] + [f"u{i + 1}" for i in range(n_u)]
              + [f"xbar{i + 1}" for i in range(n_x)] + [f"ubar{i + 1}" for i in range(n_u)] + ["strategy", "cost"]
              + [f"violated{i + 1}" for i in range(n_c)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for run, r in enumerate(result.records):
            for k in range(r.steps):
                w.writerow([run, r.seed, k] + [_fmt(v) for v in r.states[k]] + [_fmt(v) for v in r.inputs[k]]
                           + [_fmt(v) for v in r.nominal[k]] + [_fmt(v) for v in r.nominalInputs[k]]
                           + [r.strategies[k], _fmt(r.costs[k])]
                           + [int(v) for v in r.violations[k]])


def write_stats_csv(result, path):
    st = result.stats
    n_c = st.perStepCounts.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"count{i + 1}" for i in range(n_c)] + ["any", "mean_stage_cost"])
        for k in range(len(st.anyCounts)):
            mc = result.meanStageCost[k] if k < len(result.meanStageCost) else float("nan")
            w.writerow([k] + [int(v) for v in st.perStepCounts[k]] + [int(st.anyCounts[k]), _fmt(mc)])


def summary_lines(result):
    st = result.stats
    return [
        f"scenario: {result.scenario.name}",
        f"method: {result.method}",
        f"runs: {st.runs}",
        f"terminated_runs: {len(result.terminated)}",
        f"maxCount: {st.maxCount}",
        f"empirical_rate: {_fmt(st.empiricalRate)}",
        f"max_per_constraint: {' '.join(str(int(v)) for v in st.maxPerConstraint)}",
        f"mean_terminal_cost: {_fmt(result.mean_terminal_cost())}",
        f"trace_SW: {_fmt(result.traceSW)}",
    ]


def write_summary(result, path):
    with open(path, "w") as fh:
        fh.write("\n".join(summary_lines(result)) + "\n")


def write_outputs(result, outdir):
    os.makedirs(outdir, exist_ok=True)
    write_runs_csv(result, os.path.join(outdir, "runs.csv"))
    write_stats_csv(result, os.path.join(outdir, "stats.csv"))
    write_summary(result, os.path.join(outdir, "summary.txt"))


def write_feasible_csv(sets, path):
    """One row per grid point with a feasibility column per method."""
    sets = list(sets)
    ref = sets[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2"] + [f"feasible_{s.method}" for s in sets])
        for i, a in enumerate(ref.x1):
            for j, c in enumerate(ref.x2):
                w.writerow([_fmt(a), _fmt(c)] + [int(s.mask[i, j]) for s in sets])

