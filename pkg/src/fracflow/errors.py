"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` (its class name) and an
optional offending ``path`` so the CLI can emit structured error JSON.
"""


class FracflowError(Exception):
    exit_code = 1

    def __init__(self, message, path=None):
        super().__init__(message)
        self.message = message
        self.path = path

    @property
    def code(self):
        return type(self).__name__

    def to_json(self):
        out = {"code": self.code, "message": self.message}
        if self.path is not None:
            out["path"] = str(self.path)
        return out


# -- data / mesh ------------------------------------------------------------

class EmptyMesh(FracflowError):
    pass


class TooFewPoints(FracflowError):
    pass


class DegenerateCut(FracflowError):
    pass


class IoError(FracflowError):
    exit_code = 3


class SchemaError(FracflowError):
    exit_code = 2


# -- autodiff ---------------------------------------------------------------

class ShapeMismatch(FracflowError):
    pass


class GraphConsumed(FracflowError):
    pass


# -- training / inference ---------------------------------------------------

class EmptyDataset(FracflowError):
    pass


class TPastOne(FracflowError):
    pass


class AlreadyAdapted(FracflowError):
    pass


class CheckpointMismatch(FracflowError):
    exit_code = 2


class TooFewFragments(FracflowError):
    pass


# -- metrics ----------------------------------------------------------------

class EmptySet(FracflowError):
    pass


class LengthMismatch(FracflowError):
    pass
