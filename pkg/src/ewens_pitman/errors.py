"""Exception types shared across the toolkit."""


class ContractError(ValueError):
    """An argument or state violates a documented precondition."""


class UnsupportedRegimeError(ContractError):
    """The requested quantity is not defined for these parameters (e.g. alpha == 0)."""


class BudgetError(RuntimeError):
    """The request exceeds a fixed computational budget."""
