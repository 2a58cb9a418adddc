"""Exception hierarchy shared by all curvlam modules."""


class CurvlamError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(CurvlamError, ValueError):
    pass


class MeshTanglingError(CurvlamError):
    def __init__(self, element, detj):
        self.element = int(element)
        self.detj = float(detj)
        super().__init__(
            f"element {self.element} is inverted (min det J = {self.detj:.3e}); "
            "reduce the wrinkle amplitude or refine the mesh"
        )


class OutOfDomainError(CurvlamError, ValueError):
    pass


class NoConvergenceError(CurvlamError):
    pass


class MaterialError(CurvlamError, ValueError):
    pass


class MaterialLookupError(CurvlamError, KeyError):
    pass


class ElementInversionError(CurvlamError):
    def __init__(self, element, detj):
        self.element = int(element)
        super().__init__(f"non-positive Jacobian {detj:.3e} in element {element}")


class ConstraintConflictError(CurvlamError):
    pass


class PeriodicityMismatchError(CurvlamError):
    pass


class ConfigurationError(CurvlamError):
    pass


class DimensionMismatchError(CurvlamError, ValueError):
    pass


class PreconditionerFaultError(CurvlamError):
    pass


class IndefiniteMatrixError(CurvlamError):
    def __init__(self, pivot, value):
        self.pivot = int(pivot)
        self.value = float(value)
        super().__init__(f"non-positive pivot {self.value:.3e} at index {self.pivot}")


class OverDecompositionError(CurvlamError, ValueError):
    pass


class DegenerateOverlapError(CurvlamError):
    pass


class ConfigParseError(CurvlamError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class StageError(CurvlamError):
    """Wraps a failure in one pipeline stage of a run."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
