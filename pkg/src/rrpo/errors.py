class InvalidInputError(ValueError):
    """Raised when an MDP, policy or parameter set fails validation."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration hit its iteration budget before reaching tolerance."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class NoFeasiblePolicyError(RuntimeError):
    """Training finished without visiting a single feasible iterate."""

    def __init__(self, message, final_policy=None, trace=None):
        super().__init__(message)
        self.final_policy = final_policy
        self.trace = trace
