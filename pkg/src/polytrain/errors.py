class PolytrainError(Exception):
    """Base class for all errors raised by polytrain."""


class DimensionError(PolytrainError, ValueError):
    pass


class ParameterError(PolytrainError, ValueError):
    pass


class FitError(PolytrainError, ValueError):
    pass


class StateError(PolytrainError, RuntimeError):
    pass


class DataError(PolytrainError, ValueError):
    pass


class StructureError(PolytrainError, ValueError):
    pass


class CompatibilityError(PolytrainError, ValueError):
    """Raised when a layer cannot be expressed with additions and multiplications."""
