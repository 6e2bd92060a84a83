"""Exception types raised by sdeboot.

Every error carries a short machine-readable ``code`` so the CLI can emit a
JSON error record on stderr.
"""


class SdeBootError(Exception):
    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class DimensionError(SdeBootError, ValueError):
    code = "dimension"


class ParameterError(SdeBootError, ValueError):
    code = "parameter"


class UnsupportedNoiseError(SdeBootError, ValueError):
    code = "unsupported_noise"


class SingularScaleError(SdeBootError, ArithmeticError):
    code = "singular_scale"


class DegenerateDataError(SdeBootError, ValueError):
    code = "degenerate_data"


class DivergenceError(SdeBootError, ArithmeticError):
    code = "divergence"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step

    def to_dict(self):
        d = super().to_dict()
        d["step"] = self.step
        return d


class FitError(SdeBootError, RuntimeError):
    code = "fit"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def to_dict(self):
        d = super().to_dict()
        d["diagnostics"] = self.diagnostics
        return d


class DivisibilityError(SdeBootError, ValueError):
    code = "divisibility"


class BootstrapDrawError(SdeBootError, RuntimeError):
    code = "bootstrap_draw"


class DistributionError(SdeBootError, RuntimeError):
    code = "distribution"


class SingularNormalizationError(SdeBootError, ArithmeticError):
    code = "singular_normalization"


class ExperimentError(SdeBootError, RuntimeError):
    code = "experiment"
