class ForecastError(Exception):
    """Base class for all library errors."""


class DimensionError(ForecastError, ValueError):
    pass


class DomainError(ForecastError, ValueError):
    pass


class NumericError(ForecastError, ArithmeticError):
    """A non-finite value appeared where only finite values are allowed."""


class ContractError(ForecastError, RuntimeError):
    """A forward cache was handed to the wrong layer or with the wrong shape."""


class ConfigError(ForecastError, ValueError):
    pass


class IngestionError(ForecastError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DivergedTrainingError(ForecastError, ArithmeticError):
    def __init__(self, epoch, detail=""):
        self.epoch = epoch
        msg = f"training diverged at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
