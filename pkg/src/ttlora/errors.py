"""Exception taxonomy shared across the package.

The CLI maps ContractViolation to exit code 1 and NumericalFailure to
exit code 2 so that sweep wrappers can triage user error vs divergence.
"""


class ContractViolation(ValueError):
    """A caller violated a documented precondition or invariant."""


class NumericalFailure(RuntimeError):
    """A computation produced non-finite values or diverged."""
