"""Exception hierarchy shared by all drsmpc modules."""


class DRSMPCError(Exception):
    """Base class for every error raised by this package."""


class NotSchurStable(DRSMPCError, ValueError):
    pass


class NonSymmetric(DRSMPCError, ValueError):
    pass


class SynthesisFailed(DRSMPCError, RuntimeError):
    pass


class TighteningInfeasible(DRSMPCError, ValueError):
    """No nominal value can satisfy the tightened slab (variance too large)."""


class StageInfeasible(TighteningInfeasible):
    """A stage of the horizon carries an infeasible tightening.

    Attributes
    ----------
    constraint : int
        Index into the constraint list (state constraints first, then inputs).
    stage : int or str
        Prediction stage, or ``"terminal"``.
    """

    def __init__(self, constraint, stage, message=None):
        self.constraint = constraint
        self.stage = stage
        super().__init__(message or f"constraint {constraint} infeasible at stage {stage}")


class SolverError(DRSMPCError, RuntimeError):
    pass


class InitialInfeasible(DRSMPCError, RuntimeError):
    pass


class BothInfeasible(DRSMPCError, RuntimeError):
    """Neither initialization strategy yields a feasible program."""

    def __init__(self, k, s1_status, s2_status):
        self.k = k
        self.s1_status = s1_status
        self.s2_status = s2_status
        super().__init__(
            f"both strategies infeasible at step {k} (S1: {s1_status}, S2: {s2_status})"
        )


class NonDiagonalLaplace(DRSMPCError, ValueError):
    pass
