"""Exception and warning types shared by every module of the toolkit."""


class BosonSamplerError(ValueError):
    """Base class; ``code`` is the stable machine-readable tag printed by the CLI."""

    code = "error"

    def to_dict(self) -> dict:
        return {"error": str(self), "code": self.code, "status": "failed"}


class ConfigError(BosonSamplerError):
    code = "config"


class InvalidDimensionError(BosonSamplerError):
    code = "invalid-dimension"


class NonUnitaryError(BosonSamplerError):
    code = "non-unitary"

    def __init__(self, residual: float, tol: float):
        self.residual = residual
        self.tol = tol
        super().__init__(f"matrix is not unitary: max|U^dag U - I| = {residual:.3e} exceeds {tol:.1e}")


class IntractableError(BosonSamplerError):
    code = "intractable"


class PhotonNumberError(BosonSamplerError):
    code = "photon-number"


class UnsupportedInputError(BosonSamplerError):
    code = "unsupported-input"


class UndefinedVisibilityError(BosonSamplerError):
    code = "undefined-visibility"


class NormalizationError(BosonSamplerError):
    code = "normalization"


class TopologyError(BosonSamplerError):
    code = "topology"


class ParseError(BosonSamplerError):
    code = "parse"

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")


class UnattainableParameterError(BosonSamplerError):
    code = "unattainable"

    def __init__(self, message: str, attainable: tuple[float, float]):
        self.attainable = attainable
        super().__init__(f"{message} (attainable interval [{attainable[0]:.6g}, {attainable[1]:.6g}])")


class FabricationError(BosonSamplerError):
    code = "fabrication"

    def __init__(self, failures: list[tuple[int, str]]):
        self.failures = failures
        lines = "; ".join(f"element {index}: {reason}" for index, reason in failures)
        super().__init__(f"{len(failures)} element(s) cannot be fabricated: {lines}")


class IllConditionedReferenceError(BosonSamplerError):
    code = "ill-conditioned-reference"


class ConvergenceError(BosonSamplerError):
    code = "convergence"


class ReconstructionWarning(UserWarning):
    pass


class UncalibratedGeometryWarning(UserWarning):
    pass
