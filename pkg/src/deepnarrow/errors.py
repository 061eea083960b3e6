"""Exception types shared across the toolkit."""


class DimensionMismatch(ValueError):
    """Shapes of maps, vectors, or networks do not chain."""


class EvaluationFailure(RuntimeError):
    """An activation produced a non-finite value during network evaluation."""


class ConstructionError(ValueError):
    """A building block's derivative preconditions are violated."""


class ProbeFailed(RuntimeError):
    """A numerical derivative probe could not be completed at the point."""


class UnknownActivation(KeyError):
    """Requested activation name is not in the catalog."""


class InvalidActivationParams(ValueError):
    """Activation parameters outside their documented range."""


class FitSingular(RuntimeError):
    """Least-squares system is rank deficient and no ridge was requested."""


class StrategyMismatch(ValueError):
    """Program shape or activation class is incompatible with the strategy."""
