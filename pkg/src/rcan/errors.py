"""Exception hierarchy shared across the package."""


class RcanError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(RcanError, ValueError):
    """Operand shapes or channel counts do not fit the operation."""


class NonFiniteError(RcanError, FloatingPointError):
    """A NaN or infinity appeared where finite values are required."""


class ConfigError(RcanError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class CheckpointError(RcanError):
    """Base class for checkpoint read/validate failures."""


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class InconsistentCheckpointError(CheckpointError, ShapeError):
    """Tensor names or shapes disagree with the configuration."""


class PpmError(RcanError, ValueError):
    """Base class for PPM parse failures."""


class PpmHeaderError(PpmError):
    pass


class PpmUnsupportedError(PpmError):
    pass


class PpmTruncatedError(PpmError):
    pass


class PpmMaxvalError(PpmError):
    pass


class TrainingDiverged(RcanError):
    def __init__(self, iteration, loss):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at iteration {iteration}")
