"""Scenario definitions, the two built-in plants, and scenario-file I/O.

Scenario files are YAML documents::

    schema: 1
    name: buck_boost
    model:
      A: [[1, 0.0075], [-0.143, 0.996]]
      B: [[4.798], [0.115]]
      E: [[1, 0], [0, 1]]        # optional, identity by default
    noise:
      family: gaussian           # or laplace (diagonal covariance only)
      covariance: [[0.03, 0], [0, 0.03]]
    cost: {Q: [[1, 0], [0, 10]], R: [[1]], N: 8}
    constraints:
      - {direction: [1, 0], bound: 2, epsilon: 0.2, kind: state}
      - {direction: [1], bound: 0.2, epsilon: 0.01, kind: input}
    x0: [1, 2]
    steps: 50
    input_tightening: nominal    # or feedback
    overrides: {K: [[-0.28, 0.49]], S: [[1.90, -5.05], [-5.05, 39.54]]}
"""

from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .errors import NonDiagonalLaplace
from .linalg import CostSpec, SystemModel, symmetrize, synthesize
from .tightening import INPUT, STATE, TwoSidedConstraint

SCHEMA_VERSION = 1

GAUSSIAN = "gaussian"
LAPLACE = "laplace"


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution of the per-step disturbance ``w`` (before the channel ``E``)."""

    family: str
    covariance: np.ndarray

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in (GAUSSIAN, LAPLACE):
            raise ValueError(f"unknown noise family {self.family!r}")
        cov = symmetrize(np.atleast_2d(np.asarray(self.covariance, dtype=float)))
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ValueError("noise covariance must be positive semidefinite")
        if fam == LAPLACE and np.any(cov - np.diag(np.diag(cov))):
            raise NonDiagonalLaplace("Laplace noise needs a diagonal covariance")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class Scenario:
    """Everything needed to synthesize, solve and simulate one plant.

    The controller only uses ``model.Wd`` (the moment data); the plant is
    driven by draws from ``noise``, whose covariance normally equals it.
    """

    name: str
    model: SystemModel
    cost: CostSpec
    constraints: tuple
    noise: NoiseSpec
    x0: np.ndarray
    steps: int = 50
    K: np.ndarray = None
    S: np.ndarray = None
    input_tightening: str = "feedback"
    notes: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        if self.x0.shape != (self.model.n_x,):
            raise ValueError(f"x0 must have length {self.model.n_x}")
        if self.noise.covariance.shape != (self.model.n_w, self.model.n_w):
            raise ValueError("noise covariance does not match the noise channel")
        for con in self.constraints:
            dim = self.model.n_x if con.kind == STATE else self.model.n_u
            if con.direction.shape != (dim,):
                raise ValueError(f"{con.kind} constraint direction must have length {dim}")
        if self.input_tightening not in ("feedback", "nominal"):
            raise ValueError(f"unknown input_tightening {self.input_tightening!r}")

    @property
    def stateConstraints(self):
        return tuple(c for c in self.constraints if c.kind == STATE)

    @property
    def inputConstraints(self):
        return tuple(c for c in self.constraints if c.kind == INPUT)

    def synthesize(self):
        return synthesize(self.model, self.cost, K=self.K, S=self.S)

    def replace(self, **changes):
        return replace(self, **changes)


def buck_boost():
    """Buck-Boost converter with Gaussian noise, published gain and terminal weight."""
    A = np.array([[1.0, 0.0075], [-0.143, 0.996]])
    B = np.array([[4.798], [0.115]])
    W = 0.03 * np.eye(2)
    return Scenario(
        name="buck_boost",
        model=SystemModel(A, B, W, np.eye(2)),
        cost=CostSpec(np.diag([1.0, 10.0]), np.eye(1), 8),
        constraints=(
            TwoSidedConstraint([1.0, 0.0], 2.0, 0.2, STATE),
            TwoSidedConstraint([0.0, 1.0], 3.0, 0.2, STATE),
            TwoSidedConstraint([1.0], 0.2, 0.01, INPUT),
        ),
        noise=NoiseSpec(GAUSSIAN, W),
        x0=np.array([1.0, 2.0]),
        steps=50,
        K=np.array([[-0.28, 0.49]]),
        S=np.array([[1.90, -5.05], [-5.05, 39.54]]),
        input_tightening="nominal",
    )


def two_mass_spring(noise_variance=0.07, Ts=0.1, m1=1.0, m2=1.0, ks=1.25):
    """Two masses coupled by a spring; force on mass 1, Laplace forces on both.

    Euler discretization ``A = I + Ts Ac``, ``B = Ts Bc``, ``E = Ts Ec`` of
    ``x = (p1, p2, v1, v2)``.
    """
    Ac = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-ks / m1, ks / m1, 0.0, 0.0],
        [ks / m2, -ks / m2, 0.0, 0.0],
    ])
    Bc = np.array([[0.0], [0.0], [1.0 / m1], [0.0]])
    Ec = np.array([[0.0, 0.0], [0.0, 0.0], [1.0 / m1, 0.0], [0.0, 1.0 / m2]])
    Wd = noise_variance * np.eye(2)
    return Scenario(
        name="two_mass_spring",
        model=SystemModel(np.eye(4) + Ts * Ac, Ts * Bc, Wd, Ts * Ec),
        cost=CostSpec(np.diag([1.0, 1.0, 4.0, 6.0]), np.eye(1), 7),
        constraints=(
            TwoSidedConstraint([0.0, 0.0, 1.0, 0.0], 0.12, 0.2, STATE),
            TwoSidedConstraint([0.0, 0.0, 0.0, 1.0], 0.12, 0.2, STATE),
            TwoSidedConstraint([1.0], 0.5, 0.01, INPUT),
        ),
        noise=NoiseSpec(LAPLACE, Wd),
        x0=np.array([0.5, 0.5, 0.0, 0.0]),
        steps=50,
        input_tightening="nominal",
    )


def builtin_scenarios():
    return {"buck_boost": buck_boost(), "two_mass_spring": two_mass_spring()}


# ---------------------------------------------------------------------------
# YAML I/O


def _list(M):
    return np.asarray(M, dtype=float).tolist()


def scenario_to_dict(sc):
    d = {
        "schema": SCHEMA_VERSION,
        "name": sc.name,
        "model": {"A": _list(sc.model.A), "B": _list(sc.model.B), "E": _list(sc.model.E)},
        "noise": {"family": sc.noise.family, "covariance": _list(sc.noise.covariance)},
        "cost": {"Q": _list(sc.cost.Q), "R": _list(sc.cost.R), "N": sc.cost.N},
        "constraints": [
            {"direction": _list(c.direction), "bound": c.bound, "epsilon": c.epsilon, "kind": c.kind}
            for c in sc.constraints
        ],
        "x0": _list(sc.x0),
        "steps": sc.steps,
        "input_tightening": sc.input_tightening,
    }
    if not np.array_equal(sc.model.Wd, sc.noise.covariance):
        d["model"]["Wd"] = _list(sc.model.Wd)
    overrides = {}
    if sc.K is not None:
        overrides["K"] = _list(sc.K)
    if sc.S is not None:
        overrides["S"] = _list(sc.S)
    if overrides:
        d["overrides"] = overrides
    return d


def scenario_from_dict(d):
    if d.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported or missing scenario schema {d.get('schema')!r}; expected {SCHEMA_VERSION}")
    m = d["model"]
    noise = NoiseSpec(d["noise"]["family"], d["noise"]["covariance"])
    model = SystemModel(m["A"], m["B"], m.get("Wd", noise.covariance), m.get("E"))
    c = d["cost"]
    cost = CostSpec(c["Q"], c["R"], c["N"])
    cons = tuple(
        TwoSidedConstraint(e["direction"], e["bound"], e["epsilon"], e.get("kind", STATE))
        for e in d.get("constraints", [])
    )
    ov = d.get("overrides") or {}
    return Scenario(
        name=d.get("name", "scenario"),
        model=model,
        cost=cost,
        constraints=cons,
        noise=noise,
        x0=d.get("x0", np.zeros(model.n_x)),
        steps=int(d.get("steps", 50)),
        K=None if ov.get("K") is None else np.asarray(ov["K"], dtype=float),
        S=None if ov.get("S") is None else np.asarray(ov["S"], dtype=float),
        input_tightening=d.get("input_tightening", "feedback"),
    )


def load_scenario(path):
    """Read a scenario file, or a built-in scenario by name (``builtin:buck_boost``)."""
    path = str(path)
    if path.startswith("builtin:"):
        key = path.split(":", 1)[1]
        table = builtin_scenarios()
        if key not in table:
            raise ValueError(f"unknown built-in scenario {key!r}; choose from {sorted(table)}")
        return table[key]
    with open(path) as fh:
        return scenario_from_dict(yaml.safe_load(fh))


def save_scenario(sc, path):
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(sc), fh, sort_keys=False)
