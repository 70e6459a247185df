class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ContractError(RuntimeError):
    """A functional lacks something the caller relies on (e.g. an analytic jet)."""


class AssumptionViolation(RuntimeError):
    """Simulated coefficients break the standing model assumptions (det sigma != 0)."""
