class ValidationError(ValueError):
    """Invalid problem data or parameters."""


class OracleError(RuntimeError):
    """A reference solve failed to certify its tolerance within budget."""


class ContractViolationWarning(UserWarning):
    """A run left the regime in which the convergence bounds are guaranteed."""
