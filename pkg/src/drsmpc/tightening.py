"""Two-sided chance-constraint tightening.

A constraint ``Pr[|d^T z| <= b] >= 1 - eps`` on ``z = zbar + dz`` with
``E[dz] = 0`` and ``Var(d^T dz) = s2`` becomes a deterministic slab
``|d^T zbar| <= r``. Three rules for ``r`` are provided:

* ``dr``       -- moment-ambiguity (distributionally robust) SOC set, exact;
* ``gauss``    -- normal quantile at ``1 - eps/2`` per side;
* ``cantelli`` -- Cantelli bound with a uniform ``eps/2`` per side.

The SOC set is ``{m : exists y >= 0, 0 <= lam <= b,
y^2 + s2 <= eps (b - lam)^2, |m| <= y + lam}``; its largest ``|m|`` has a
closed form (see :func:`slab_radius_dr`).
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.stats import norm

from .errors import StageInfeasible, TighteningInfeasible

STATE = "state"
INPUT = "input"
UNBOUNDED = "unbounded"

METHODS = ("dr", "gauss", "cantelli")


@dataclass(frozen=True)
class TwoSidedConstraint:
    """``Pr[|direction^T v| <= bound] >= 1 - epsilon`` for ``v`` a state or input."""

    direction: np.ndarray
    bound: float
    epsilon: float
    kind: str = STATE

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.direction, dtype=float))
        if d.ndim != 1 or not np.any(d):
            raise ValueError("direction must be a nonzero vector")
        if not self.bound > 0:
            raise ValueError(f"bound must be positive, got {self.bound}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.kind not in (STATE, INPUT):
            raise ValueError(f"kind must be 'state' or 'input', got {self.kind!r}")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "bound", float(self.bound))
        object.__setattr__(self, "epsilon", float(self.epsilon))


@dataclass(frozen=True)
class SocTightening:
    variance: float
    bound: float
    epsilon: float
    radius: float


def _check_args(variance, bound, epsilon):
    if variance < 0:
        if variance < -1e-12:
            raise ValueError(f"variance must be nonnegative, got {variance}")
        variance = 0.0
    if not bound > 0:
        raise ValueError(f"bound must be positive, got {bound}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    return float(variance), float(bound), float(epsilon)


def slab_radius_dr(variance, bound, epsilon):
    """Largest ``|m|`` admitted by the two-sided moment-ambiguity SOC set.

    With ``t = b - lam`` the objective ``b - t + sqrt(eps t^2 - s2)`` is
    concave in ``t`` and peaks at ``t* = s / sqrt(eps (1 - eps))``, so

    * ``r = b - s sqrt((1 - eps)/eps)``  if ``t* <= b``,
    * ``r = sqrt(eps b^2 - s2)``          otherwise (``lam = 0``),

    and the set is empty when ``s2 > eps b^2``.

    Raises
    ------
    TighteningInfeasible
        If ``variance > epsilon * bound**2``.
    """
    s2, b, p = _check_args(variance, bound, epsilon)
    if s2 > p * b * b:
        raise TighteningInfeasible(f"variance {s2:.6g} exceeds eps*b^2 = {p * b * b:.6g}")
    s = np.sqrt(s2)
    if s <= b * np.sqrt(p * (1.0 - p)):
        r = b - s * np.sqrt((1.0 - p) / p)
    else:
        r = np.sqrt(max(0.0, p * b * b - s2))
    return float(min(max(r, 0.0), b))


def slab_radius_dr_search(variance, bound, epsilon, xtol=1e-10):
    """Same radius as :func:`slab_radius_dr` by bounded 1-D maximization over ``lam``."""
    s2, b, p = _check_args(variance, bound, epsilon)
    if s2 > p * b * b:
        raise TighteningInfeasible(f"variance {s2:.6g} exceeds eps*b^2 = {p * b * b:.6g}")
    lam_max = b - np.sqrt(s2 / p)

    def neg(lam):
        return -(lam + np.sqrt(max(0.0, p * (b - lam) ** 2 - s2)))

    if lam_max <= 0.0:
        return float(-neg(0.0))
    res = optimize.minimize_scalar(neg, bounds=(0.0, lam_max), method="bounded",
                                   options={"xatol": xtol})
    return float(max(-res.fun, -neg(0.0), -neg(lam_max)))


def slab_radius_gaussian(variance, bound, epsilon):
    s2, b, p = _check_args(variance, bound, epsilon)
    r = b - norm.ppf(1.0 - p / 2.0) * np.sqrt(s2)
    if r < 0:
        raise TighteningInfeasible(f"Gaussian radius {r:.6g} is negative")
    return float(r)


def slab_radius_cantelli(variance, bound, epsilon):
    s2, b, p = _check_args(variance, bound, epsilon)
    r = b - np.sqrt(s2) * np.sqrt((2.0 - p) / p)
    if r < 0:
        raise TighteningInfeasible(f"Cantelli radius {r:.6g} is negative")
    return float(r)


RADIUS_RULES = {
    "dr": slab_radius_dr,
    "gauss": slab_radius_gaussian,
    "cantelli": slab_radius_cantelli,
}


def radius_rule(method):
    try:
        return RADIUS_RULES[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}") from None


def soc_membership(nominal, variance, bound, epsilon, y, lam, tol=0.0):
    """Check ``(m, y, lam)`` against the two-sided SOC set."""
    return bool(
        y >= -tol
        and -tol <= lam <= bound + tol
        and y * y + variance <= epsilon * (bound - lam) ** 2 + tol
        and abs(nominal) <= y + lam + tol
    )


def tighten(variance, bound, epsilon, method="dr"):
    r = radius_rule(method)(variance, bound, epsilon)
    return SocTightening(float(variance), float(bound), float(epsilon), r)


def worst_case_violation(nominal, variance, bound, steps_per_sigma=200, span=10.0):
    """Largest ``Pr[|m + w| > b]`` over zero-mean laws of variance ``s2``.

    Numerical oracle. Searches three-point laws with one violating atom on
    each side (``w1 > b - m``, ``w2 < -b - m``) and one admissible atom
    ``w0`` in ``[-b - m, b - m]``. For fixed violating atoms the weights
    follow from the moment equations; the admissible atom that minimizes
    its own weight is the midpoint of ``w1`` and ``w2`` clipped to the
    interval where all three weights are nonnegative. Violating atoms are
    gridded with step ``sigma / steps_per_sigma`` over ``span`` standard
    deviations. The result is a lower bound on the supremum that converges
    as the grid is refined. Atoms exactly on the boundary count as
    satisfied.
    """
    m = float(nominal)
    s2 = float(variance)
    b = float(bound)
    if abs(m) > b:
        return 1.0
    if s2 <= 0.0:
        return 0.0
    s = np.sqrt(s2)
    h = s / steps_per_sigma
    n = int(round(span * steps_per_sigma))
    up = (b - m) + h * np.arange(1, n + 1)
    lo = (-b - m) - h * np.arange(1, n + 1)
    # violating atoms must also sit on opposite sides of zero
    w1 = up[up > 0][:, None]
    w2 = lo[lo < 0][None, :]
    lo_adm, hi_adm = -b - m, b - m

    with np.errstate(divide="ignore", invalid="ignore"):
        w0_lo = np.maximum(lo_adm, -s2 / w1)
        w0_hi = np.minimum(hi_adm, s2 / (-w2))
        w0 = np.clip(0.5 * (w1 + w2), w0_lo, w0_hi)
        ok = w0_lo <= w0_hi
        q0 = (s2 + w1 * w2) / ((w0 - w1) * (w0 - w2))
        q1 = (s2 + w0 * w2) / ((w1 - w0) * (w1 - w2))
        q2 = (s2 + w0 * w1) / ((w2 - w0) * (w2 - w1))
    tol = 1e-12
    feasible = ok & (q0 >= -tol) & (q1 >= -tol) & (q2 >= -tol) & (q0 <= 1 + tol)
    best = 0.0
    if np.any(feasible):
        best = float(np.max(np.where(feasible, q1 + q2, 0.0)))

    # two-point laws: a single violating atom balanced by one admissible atom
    for w in (up, lo):
        w0 = -s2 / w
        inside = (w0 >= lo_adm) & (w0 <= hi_adm)
        if np.any(inside):
            q = s2 / (s2 + w[inside] ** 2)
            best = max(best, float(q.max()))
    return float(min(max(best, 0.0), 1.0))


def constraint_variance(constraint, Sigma, K, input_tightening="feedback"):
    """Variance of ``direction^T dz`` for the error covariance ``Sigma``.

    Input rows use ``c^T K Sigma K^T c`` (the variance of the feedback part
    ``c^T K dx``); with ``input_tightening="nominal"`` they are imposed on
    the nominal input alone and carry zero variance.
    """
    d = constraint.direction
    if constraint.kind == STATE:
        return float(d @ Sigma @ d)
    if input_tightening == "nominal":
        return 0.0
    if input_tightening != "feedback":
        raise ValueError(f"unknown input_tightening {input_tightening!r}")
    v = K.T @ d
    return float(v @ Sigma @ v)


@dataclass(frozen=True)
class StageRadii:
    """Slab radii per stage and constraint.

    ``stage[l, i]`` for ``l = 0..N-1`` over all constraints; ``terminal[j]``
    for the ``j``-th state constraint; ``variance`` mirrors ``stage``.
    """

    stage: np.ndarray
    terminal: np.ndarray
    variance: np.ndarray
    terminal_variance: np.ndarray


def stage_radii(constraints, artifacts, Sigma0=None, method="dr", input_tightening="feedback"):
    """Slab radii for every constraint over the horizon plus the terminal set.

    Raises
    ------
    StageInfeasible
        For the first ``(constraint, stage)`` whose tightening is empty.
    """
    rule = radius_rule(method)
    Sig = artifacts.covariances(Sigma0)
    N = len(Sig) - 1
    K = artifacts.K
    m = len(constraints)
    radii = np.empty((N, m))
    var = np.empty((N, m))
    for l in range(N):
        for i, con in enumerate(constraints):
            v = constraint_variance(con, Sig[l], K, input_tightening)
            var[l, i] = v
            try:
                radii[l, i] = rule(v, con.bound, con.epsilon)
            except TighteningInfeasible:
                raise StageInfeasible(i, l) from None
    term, term_var = [], []
    for i, con in enumerate(constraints):
        if con.kind != STATE:
            continue
        v = constraint_variance(con, artifacts.SigmaBar, K)
        term_var.append(v)
        try:
            term.append(rule(v, con.bound, con.epsilon))
        except TighteningInfeasible:
            raise StageInfeasible(i, "terminal") from None
    return StageRadii(radii, np.array(term), var, np.array(term_var))


@dataclass(frozen=True)
class TerminalSet:
    """Slab intersection ``{x : |a_i^T x| <= r_f_i}`` built from the steady covariance."""

    constraints: tuple
    SigmaBar: np.ndarray

    @property
    def directions(self):
        return np.array([a for a, _ in self.constraints])

    @property
    def radii(self):
        return np.array([r for _, r in self.constraints])

    def contains(self, x, tol=0.0):
        return bool(np.all(np.abs(self.directions @ x) <= self.radii + tol))


def terminal_set(constraints, artifacts, method="dr"):
    rule = radius_rule(method)
    pairs = []
    for i, con in enumerate(constraints):
        if con.kind != STATE:
            continue
        v = float(con.direction @ artifacts.SigmaBar @ con.direction)
        try:
            pairs.append((con.direction, rule(v, con.bound, con.epsilon)))
        except TighteningInfeasible:
            raise StageInfeasible(i, "terminal") from None
    return TerminalSet(tuple(pairs), artifacts.SigmaBar)


@dataclass(frozen=True)
class TerminalReport:
    """Outcome of the terminal-set certificate.

    ``invariant`` and ``inputAdmissible`` are ``True``/``False`` or
    :data:`UNBOUNDED` when the slab intersection is unbounded along a
    direction the check depends on.
    """

    invariant: object
    inputAdmissible: object
    invariance_margins: tuple = ()
    input_margins: tuple = ()

    @property
    def certified(self):
        return self.invariant is True and self.inputAdmissible is True


def _max_abs_over_slabs(c, G, r):
    """max |c^T x| s.t. |G x| <= r; returns ``None`` when unbounded."""
    if not np.any(c):
        return 0.0
    A_ub = np.vstack([G, -G])
    b_ub = np.concatenate([r, r])
    best = 0.0
    for sign in (1.0, -1.0):
        res = optimize.linprog(-sign * c, A_ub=A_ub, b_ub=b_ub,
                               bounds=[(None, None)] * len(c), method="highs")
        if res.status == 3:
            return None
        if res.status != 0:
            raise RuntimeError(f"terminal certificate LP failed: {res.message}")
        best = max(best, -res.fun)
    return best


def certify_terminal(artifacts, constraints, terminal, method="dr", input_tightening="feedback",
                     tol=1e-9):
    """Check invariance of the terminal set and admissibility of ``u = K x`` on it."""
    G = terminal.directions
    r = terminal.radii
    Acl = artifacts.Acl
    inv_margins = []
    invariant = True
    for a, rf in terminal.constraints:
        val = _max_abs_over_slabs(Acl.T @ a, G, r)
        if val is None:
            invariant = UNBOUNDED
            inv_margins.append(np.inf)
            continue
        inv_margins.append(val - rf)
        if val > rf + tol and invariant is True:
            invariant = False

    rule = radius_rule(method)
    admissible = True
    in_margins = []
    for con in constraints:
        if con.kind != INPUT:
            continue
        v = constraint_variance(con, artifacts.SigmaBar, artifacts.K, input_tightening)
        try:
            rad = rule(v, con.bound, con.epsilon)
        except TighteningInfeasible:
            admissible = False if admissible is True else admissible
            in_margins.append(np.inf)
            continue
        val = _max_abs_over_slabs(artifacts.K.T @ con.direction, G, r)
        if val is None:
            admissible = UNBOUNDED
            in_margins.append(np.inf)
            continue
        in_margins.append(val - rad)
        if val > rad + tol and admissible is True:
            admissible = False
    return TerminalReport(invariant, admissible, tuple(inv_margins), tuple(in_margins))
