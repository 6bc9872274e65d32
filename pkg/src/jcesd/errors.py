"""Exception hierarchy shared by all modules."""


class JcesdError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(JcesdError, ValueError):
    pass


class DimensionMismatchError(InvalidArgumentError):
    pass


class SingularMatrixError(JcesdError):
    pass


class IllConditionedPrecoderError(JcesdError):
    def __init__(self, condition: float):
        super().__init__(f"ill-conditioned precoder Gram matrix (cond={condition:.3e})")
        self.condition = condition


class StructureViolationError(JcesdError):
    pass


class InfeasibleStartError(JcesdError):
    pass


class NumericalFailureError(JcesdError):
    pass


class DegenerateSamplesError(JcesdError):
    pass


class DegenerateStreamError(JcesdError):
    pass


class BlockFailure(JcesdError):
    """Raised in strict mode when a block fails the condition-number gate."""


class AmbiguityError(JcesdError):
    pass


class InsufficientSamplesError(JcesdError):
    pass


class DetectionFailureError(JcesdError):
    pass


class OutOfRegimeError(JcesdError):
    pass


class CapacityExceededError(InvalidArgumentError):
    pass


class EstimationImpossibleError(JcesdError):
    pass


class UndefinedMetricError(JcesdError):
    pass
