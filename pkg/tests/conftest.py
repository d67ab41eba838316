import numpy as np
import pytest

from drsmpc.linalg import CostSpec, SystemModel
from drsmpc.scenarios import GAUSSIAN, NoiseSpec, Scenario
from drsmpc.tightening import INPUT, STATE, TwoSidedConstraint


def scalar_scenario(noise=0.01, N=5, x0=0.5, family=GAUSSIAN):
    """A stable scalar plant whose terminal slab is invariant and input-admissible."""
    W = np.array([[noise]])
    return Scenario(
        name="scalar",
        model=SystemModel([[0.9]], [[1.0]], W),
        cost=CostSpec([[1.0]], [[1.0]], N),
        constraints=(
            TwoSidedConstraint([1.0], 1.0, 0.2, STATE),
            TwoSidedConstraint([1.0], 1.0, 0.1, INPUT),
        ),
        noise=NoiseSpec(family, W),
        x0=[x0],
        steps=30,
    )


def random_instance(rng, n_x=None, n_u=None):
    """Random stabilizable plant, cost, constraints and initial state."""
    n_x = n_x or int(rng.integers(1, 4))
    n_u = n_u or int(rng.integers(1, 3))
    A = rng.normal(size=(n_x, n_x))
    A *= rng.uniform(0.5, 1.2) / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
    B = rng.normal(size=(n_x, n_u))
    Wd = np.diag(rng.uniform(0.0, 0.02, size=n_x))
    model = SystemModel(A, B, Wd)
    cost = CostSpec(np.diag(rng.uniform(0.5, 2.0, size=n_x)), np.diag(rng.uniform(0.5, 2.0, size=n_u)),
                    int(rng.integers(1, 7)))
    cons = []
    for _ in range(int(rng.integers(1, 3))):
        d = rng.normal(size=n_x)
        cons.append(TwoSidedConstraint(d / np.linalg.norm(d), rng.uniform(0.5, 2.0), rng.uniform(0.05, 0.5), STATE))
    for _ in range(int(rng.integers(0, 2))):
        d = rng.normal(size=n_u)
        cons.append(TwoSidedConstraint(d / np.linalg.norm(d), rng.uniform(0.5, 3.0), rng.uniform(0.05, 0.5), INPUT))
    x0 = rng.uniform(-1.5, 1.5, size=n_x)
    return model, cost, tuple(cons), x0


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
