"""Dense control-synthesis primitives.

Discrete Lyapunov solves, Riccati gain synthesis, covariance propagation
and the Loewner-order / Schur-stability checks used by the tube controller.
All matrices returned as covariances or weights are exactly symmetric.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NonSymmetric, NotSchurStable, SynthesisFailed

_SCHUR_MARGIN = 1e-9
_SYM_TOL = 1e-10
_KRON_MAX_DIM = 8


def symmetrize(X):
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + X.T)


def _as_matrix(X, name):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {X.shape}")
    return X


@dataclass(frozen=True)
class SystemModel:
    """Linear plant ``x+ = A x + B u + E w`` with ``cov(w) = Wd``.

    Parameters
    ----------
    A : (n_x, n_x) array
    B : (n_x, n_u) array
    E : (n_x, n_w) array, optional
        Noise channel; identity when omitted.
    Wd : (n_w, n_w) array
        Disturbance covariance (symmetric PSD).
    """

    A: np.ndarray
    B: np.ndarray
    Wd: np.ndarray
    E: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        n_x = A.shape[0]
        if A.shape != (n_x, n_x):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n_x:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n_x}")
        E = np.eye(n_x) if self.E is None else _as_matrix(self.E, "E")
        if E.shape[0] != n_x:
            raise ValueError(f"E has {E.shape[0]} rows, expected {n_x}")
        Wd = _as_matrix(self.Wd, "Wd")
        if Wd.shape != (E.shape[1], E.shape[1]):
            raise ValueError(f"Wd must be {E.shape[1]}x{E.shape[1]}, got {Wd.shape}")
        if np.max(np.abs(Wd - Wd.T)) > _SYM_TOL:
            raise NonSymmetric("Wd is not symmetric")
        if np.linalg.eigvalsh(symmetrize(Wd)).min() < -1e-10:
            raise ValueError("Wd is not positive semidefinite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "Wd", symmetrize(Wd))

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_w(self):
        return self.E.shape[1]

    @property
    def W(self):
        """State-space noise covariance ``E Wd E^T``."""
        return symmetrize(self.E @ self.Wd @ self.E.T)


@dataclass(frozen=True)
class CostSpec:
    Q: np.ndarray
    R: np.ndarray
    N: int

    def __post_init__(self):
        Q = symmetrize(_as_matrix(self.Q, "Q"))
        R = symmetrize(_as_matrix(self.R, "R"))
        for name, M in (("Q", Q), ("R", R)):
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be symmetric positive definite") from None
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"horizon N must be a positive integer, got {self.N}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "N", int(self.N))


@dataclass(frozen=True)
class SynthesisArtifacts:
    """Offline quantities of the tube controller.

    ``Sigma[l]`` is the error covariance at prediction stage ``l`` started
    from a zero initial covariance; ``SigmaBar`` is its limit.
    """

    K: np.ndarray
    S: np.ndarray
    Sigma: tuple
    SigmaBar: np.ndarray
    spectralRadius: float
    Acl: np.ndarray = field(repr=False, default=None)
    W: np.ndarray = field(repr=False, default=None)

    @property
    def N(self):
        return len(self.Sigma) - 1

    def covariances(self, Sigma0=None):
        """Covariance sequence Sigma_0..Sigma_N started from ``Sigma0``."""
        if Sigma0 is None:
            return self.Sigma
        return propagate_covariance(Sigma0, self.Acl, self.W, self.N)


def spectral_radius(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got {M.shape}")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def solve_discrete_lyapunov(M, C):
    """Solve ``M^T S M - S = -C`` for symmetric ``S``.

    Uses the Kronecker-vectorized linear system for small dimensions and a
    doubling (Smith) iteration above ``_KRON_MAX_DIM`` states.

    Raises
    ------
    NotSchurStable
        If ``rho(M) >= 1 - 1e-9``.
    NonSymmetric
        If ``C`` is asymmetric beyond ``1e-10``.
    """
    M = _as_matrix(M, "M")
    C = _as_matrix(C, "C")
    n = M.shape[0]
    if M.shape != (n, n) or C.shape != (n, n):
        raise ValueError(f"shape mismatch: M {M.shape}, C {C.shape}")
    if np.max(np.abs(C - C.T), initial=0.0) > _SYM_TOL:
        raise NonSymmetric("C is not symmetric")
    rho = spectral_radius(M)
    if rho >= 1.0 - _SCHUR_MARGIN:
        raise NotSchurStable(f"spectral radius {rho:.12g} is not below 1")
    C = symmetrize(C)
    if n <= _KRON_MAX_DIM:
        # vec(M^T S M) = (M^T kron M^T) vec(S) for column-major vec
        lhs = np.eye(n * n) - np.kron(M.T, M.T)
        S = np.linalg.solve(lhs, C.reshape(-1, order="F")).reshape((n, n), order="F")
        return symmetrize(S)
    S = C.copy()
    Mk = M.copy()
    for _ in range(200):
        step = Mk.T @ S @ Mk
        S = S + step
        Mk = Mk @ Mk
        if np.linalg.norm(step) <= 1e-12 * max(1.0, np.linalg.norm(S)):
            break
    return symmetrize(S)


def steady_state_covariance(Acl, W):
    """Fixed point of ``Sigma = Acl Sigma Acl^T + W``."""
    return solve_discrete_lyapunov(np.asarray(Acl, dtype=float).T, W)


def propagate_covariance(Sigma0, Acl, W, N):
    Acl = _as_matrix(Acl, "Acl")
    Sig = symmetrize(Sigma0)
    W = symmetrize(W)
    out = [Sig]
    for _ in range(int(N)):
        Sig = symmetrize(Acl @ Sig @ Acl.T + W)
        out.append(Sig)
    return tuple(out)


def loewner_leq(P, Q, tol=1e-9):
    """True iff ``P <= Q`` in the Loewner order, up to ``tol``."""
    D = symmetrize(np.asarray(Q, dtype=float) - np.asarray(P, dtype=float))
    return bool(np.linalg.eigvalsh(np.atleast_2d(D)).min() >= -tol)


def synthesize_gain(model, cost, max_iter=10_000, rtol=1e-12):
    """Infinite-horizon discrete LQR gain by fixed-point Riccati iteration.

    Returns ``K`` with the convention ``u = K x`` (so ``A + B K`` is the
    closed loop).
    """
    A, B, Q, R = model.A, model.B, cost.Q, cost.R
    P = Q.copy()
    for _ in range(max_iter):
        BtPA = B.T @ P @ A
        G = R + B.T @ P @ B
        P_next = symmetrize(Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(G, BtPA))
        if not np.all(np.isfinite(P_next)):
            break
        change = np.linalg.norm(P_next - P)
        P = P_next
        if change <= rtol * max(1.0, np.linalg.norm(P)):
            K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            rho = spectral_radius(A + B @ K)
            if rho >= 1.0:
                raise SynthesisFailed(f"Riccati fixed point gives rho(A+BK) = {rho:.6g}")
            return K
    raise SynthesisFailed(f"Riccati iteration did not converge in {max_iter} iterations")


def synthesize(model, cost, K=None, S=None):
    """Compute gain, terminal weight and covariance data for a scenario.

    ``K`` and ``S`` may be supplied to override the synthesized values
    (published gains, for instance). ``S`` defaults to the Lyapunov solution
    ``(A+BK)^T S (A+BK) - S = -(Q + K^T R K)``.
    """
    if K is None:
        K = synthesize_gain(model, cost)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (model.n_u, model.n_x):
        raise ValueError(f"K must be {model.n_u}x{model.n_x}, got {K.shape}")
    Acl = model.A + model.B @ K
    rho = spectral_radius(Acl)
    if rho >= 1.0 - _SCHUR_MARGIN:
        raise NotSchurStable(f"rho(A+BK) = {rho:.6g}")
    if S is None:
        S = solve_discrete_lyapunov(Acl, cost.Q + K.T @ cost.R @ K)
    else:
        S = symmetrize(_as_matrix(S, "S"))
    W = model.W
    return SynthesisArtifacts(
        K=K,
        S=S,
        Sigma=propagate_covariance(np.zeros_like(W), Acl, W, cost.N),
        SigmaBar=steady_state_covariance(Acl, W),
        spectralRadius=rho,
        Acl=Acl,
        W=W,
    )
