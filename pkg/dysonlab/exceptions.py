class DysonLabException(Exception):
    code: int = NotImplemented


class InvalidConfig(DysonLabException):
    code = 2


class InvalidModel(DysonLabException, ValueError):
    code = 2


class InvalidWindow(DysonLabException, ValueError):
    code = 2


class DimensionMismatch(DysonLabException, ValueError):
    code = 2


class InvalidIdentityCode(DysonLabException):
    code = 2


class PredictionRangeError(DysonLabException, ValueError):
    code = 2


class NumericalFailure(DysonLabException):
    code = 3


class NonHermitianError(NumericalFailure):
    pass


class UndefinedFunctionError(NumericalFailure):
    pass


class SignDegeneracy(UndefinedFunctionError):
    pass


class ConvergenceError(NumericalFailure):
    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


class PositivityLoss(NumericalFailure):
    pass


class EigensolverError(NumericalFailure):
    pass


class NotIsolated(NumericalFailure):
    def __init__(self, message: str, gap: float | None = None):
        super().__init__(message)
        self.gap = gap


class InsideSupport(NumericalFailure):
    pass


class IndeterminateIndex(NumericalFailure):
    pass


class InsufficientData(NumericalFailure):
    pass


class CoverageError(NumericalFailure):
    pass


class AmbiguousSingularity(NumericalFailure):
    pass
