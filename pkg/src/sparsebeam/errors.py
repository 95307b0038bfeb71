"""Exception hierarchy.

The three mid-level classes map onto the CLI's exit codes:
ConfigurationError -> 2, DataError -> 3, NumericalError -> 4.
"""


class SparseBeamError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SparseBeamError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


class DataError(SparseBeamError):
    """Missing, corrupt, or mismatched data (CLI exit code 3)."""


class NumericalError(SparseBeamError):
    """Numerical failure such as divergence or non-finite values (CLI exit code 4)."""


class StepError(ConfigurationError):
    """Diffusion timestep outside the valid range 1..T."""


class ShapeError(DataError):
    """Array arguments whose shapes or dtypes do not line up."""


class ContractViolation(DataError):
    """A pluggable component (e.g. a denoiser) broke its interface contract."""


class GeometryError(ConfigurationError):
    """Scan geometry cannot cover the requested volume, or is internally inconsistent."""


class AssemblyError(DataError):
    """Sub-volume set cannot be assembled (missing, duplicate, or alien blocks)."""


class ReconstructionError(DataError):
    """Projection data unsuitable for reconstruction."""


class TrainingDivergenceError(NumericalError):
    """Training loss became non-finite."""
