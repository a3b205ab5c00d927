"""Exception hierarchy. Every error carries a short machine-readable code."""


class GalacticError(Exception):
    code = "E_GALACTIC"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context

    def __str__(self) -> str:
        msg = super().__str__()
        if self.context:
            extra = ", ".join(f"{k}={v}" for k, v in self.context.items())
            return f"{msg} ({extra})"
        return msg


class FormatError(GalacticError):
    code = "E_FORMAT"


class ParseError(GalacticError):
    code = "E_PARSE"


class EmptyCorpusError(GalacticError):
    code = "E_EMPTY"


class ShapeError(GalacticError, ValueError):
    code = "E_SHAPE"


class PreconditionError(GalacticError, ValueError):
    code = "E_PRECONDITION"


class TrainingError(GalacticError):
    code = "E_TRAINING"


class BudgetError(GalacticError):
    """Raised when exhaustive selection would exceed its evaluation cap."""

    code = "E_BUDGET"


class ConfigError(GalacticError):
    code = "E_CONFIG"


class ArtifactError(GalacticError):
    code = "E_ARTIFACT"
