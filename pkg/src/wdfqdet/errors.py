"""Exception types. Each carries a stable machine-readable ``code``."""


class WDFQError(Exception):
    code = "E_GENERIC"
    exit_status = 1


class DimensionError(WDFQError, ValueError):
    code = "E_DIMENSION"
    exit_status = 3


class ShapeError(DimensionError):
    """Extents unsuitable for an operation (e.g. odd extent for a Haar step)."""
    code = "E_SHAPE"


class ConfigError(WDFQError, ValueError):
    code = "E_CONFIG"
    exit_status = 2


class ArgumentError(WDFQError, ValueError):
    code = "E_ARGUMENT"
    exit_status = 2


class UnsupportedOpError(WDFQError, KeyError):
    code = "E_UNSUPPORTED_OP"
    exit_status = 4


class RegistryError(WDFQError, KeyError):
    code = "E_REGISTRY"
    exit_status = 4


class InfeasibleError(WDFQError, ValueError):
    code = "E_INFEASIBLE"
    exit_status = 5


class StatisticsError(WDFQError, ValueError):
    code = "E_STATISTICS"
    exit_status = 5


class NumericError(WDFQError, ArithmeticError):
    code = "E_NUMERIC"
    exit_status = 5


class DivergenceError(NumericError):
    code = "E_DIVERGENCE"

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"loss became non-finite at step {step}")


class ImageFormatError(WDFQError, ValueError):
    code = "E_IMAGE_FORMAT"
    exit_status = 6


class PairingError(WDFQError, ValueError):
    code = "E_PAIRING"
    exit_status = 7


class ExtentError(WDFQError, ValueError):
    """Image extents not divisible by the pyramid's coarsest stride times two."""
    code = "E_EXTENT"
    exit_status = 8


class TensorFileError(WDFQError, ValueError):
    code = "E_TENSOR_FILE"
    exit_status = 6
