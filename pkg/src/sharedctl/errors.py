"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """World or experiment configuration is inconsistent or infeasible."""


class InvalidActionError(ValueError):
    """Action rejected by the environment (non-finite components)."""


class DegenerateInputError(ValueError):
    """Geometric input too small to define a direction."""


class SpecMismatchError(ValueError):
    """Input shape or network spec does not match what a model expects."""


class WeightsFormatError(ValueError):
    """Weight file is malformed, truncated, or belongs to another network."""


class TrainingError(RuntimeError):
    """Training cannot proceed (empty dataset, non-finite gradients, ...)."""


class LabelingError(ValueError):
    """Episode cannot be relabeled (missing true goal or robot actions)."""


class OptimizationError(RuntimeError):
    """Trajectory optimization failed irrecoverably (NaN in linear solve)."""


class StageError(RuntimeError):
    """A pipeline stage failed; message carries the stage tag."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
