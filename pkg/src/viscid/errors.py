"""Exception hierarchy for the viscid package."""


class ViscidError(Exception):
    """Base class for all viscid errors."""


class SceneError(ViscidError):
    """Invalid scene description."""


class AssemblyError(ViscidError):
    """Linear system assembly produced an inconsistent operator."""


class SolverError(ViscidError):
    """Iterative solve failed to converge.

    Carries the final relative residual and the iteration count so callers
    can distinguish ill-conditioning from a too-small iteration budget.
    """

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class WeightFormatError(ViscidError):
    """Weight file is not in the expected container format."""


class WeightVersionError(WeightFormatError):
    """Weight file declares an unsupported format version."""


class WeightTruncatedError(WeightFormatError):
    """Weight file ends before all declared tensors were read."""


class WeightShapeChainError(WeightFormatError):
    """Declared layer shapes do not chain into a valid network."""


class DatasetError(ViscidError):
    """Dataset container error."""


class DatasetVersionError(DatasetError):
    """Dataset file declares an unsupported format version."""


class DatasetTruncatedError(DatasetError):
    """Dataset file ends mid-record."""


class DatasetChecksumError(DatasetError):
    """Stored record checksum does not match its payload."""


class SimulationError(ViscidError):
    """A simulation stage failed; carries the frame index."""

    def __init__(self, frame: int, stage: str, cause: Exception):
        super().__init__(f"frame {frame}, stage '{stage}': {cause}")
        self.frame = frame
        self.stage = stage
        self.cause = cause
