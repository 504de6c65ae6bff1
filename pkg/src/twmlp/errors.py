"""Exception types raised across the package."""


class TWMLPError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TWMLPError, ValueError):
    pass


class DegenerateRotationError(TWMLPError, ValueError):
    pass


class ShapeError(TWMLPError, ValueError):
    pass


class ContractError(TWMLPError, ValueError):
    """A precondition of an operation was violated."""


class NonFiniteError(TWMLPError, FloatingPointError):
    pass


class SequencingError(TWMLPError, ValueError):
    """Frames arrived out of order or with gaps."""


class HistoryError(TWMLPError, ValueError):
    """Not enough past frames to build the requested windows."""


class ConfigError(TWMLPError, ValueError):
    pass


class FormatError(TWMLPError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingDiverged(TWMLPError, FloatingPointError):
    def __init__(self, step, detail=""):
        msg = f"training diverged at step {step}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.step = step
