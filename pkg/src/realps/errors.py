"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model, ladder, or run configuration."""


class UnsupportedDimensionError(ConfigurationError):
    """Operation requested outside its supported dimension range."""


class EstimationError(RuntimeError):
    """A Monte Carlo weight estimator could not produce a trustworthy value."""

    def __init__(self, message: str, *, level: int | None = None, hits: int | None = None):
        super().__init__(message)
        self.level = level
        self.hits = hits


class RebalanceError(RuntimeError):
    """Level rebalancing failed because a level was never visited."""

    def __init__(self, message: str, *, starved_level: int | None = None):
        super().__init__(message)
        self.starved_level = starved_level


class SimulationError(RuntimeError):
    """Chain simulation aborted (e.g. non-finite log density)."""


class StageError(RuntimeError):
    """A training stage failed; carries the (level, stage) annotation."""

    def __init__(self, message: str, *, level: int, stage: str):
        super().__init__(message)
        self.level = level
        self.stage = stage
