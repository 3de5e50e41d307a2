"""Exception types shared across the package."""


class DetailedBalanceViolation(ValueError):
    """Rates and reference measure do not satisfy m(x)N(x,y) = m(y)N(y,x)."""


class NotIrreducible(ValueError):
    """The jump structure does not connect the state space."""


class SingularOperator(ValueError):
    """Resolvent requested at alpha = 0 for a conservative model."""


class EigenFailure(RuntimeError):
    """Dense symmetric eigensolve did not converge."""


class PowerIterationDivergence(RuntimeError):
    """Nonlinear power iteration for an operator norm failed to settle."""


class InterpolationBracketViolation(RuntimeError):
    """A computed L^p norm escaped its Riesz-Thorin bracket."""


class NotTransient(ValueError):
    """Green operator requested for a model with no killing and alpha = 0."""


class WindowViolation(ValueError):
    """Requested time or radius lies outside the trustworthy lattice window."""


class NotApplicable(ValueError):
    """The requested criterion has no content for these parameters."""
