"""Exception hierarchy for the thickjunction package.

Three broad families map onto CLI exit codes: configuration problems
(exit 2), solver failures (exit 3), and acceptance/verification failures
(exit 4).
"""


class ThickJunctionError(Exception):
    """Base class for all package errors."""


# --- configuration / validation -------------------------------------------

class ConfigError(ThickJunctionError):
    """A problem file or parameter set could not be accepted."""


class RangeViolation(ConfigError):
    """A width or offset lies outside its open interval."""


class NestingViolation(ConfigError):
    """Child rod widths do not nest strictly inside the parent width."""


class BadCount(ConfigError):
    """Rod count N is too small."""


class BoundViolation(ConfigError):
    """A declared derivative bound fails on the certification interval."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


# --- meshing ----------------------------------------------------------------

class SnapConflict(ThickJunctionError):
    """Wall snapping would collapse a rod to zero width."""


class UntaggedBoundary(ThickJunctionError):
    """A mesh boundary edge carries no tag."""


class GridMismatch(ThickJunctionError):
    """Two fields that must share a grid do not."""


class ShapeMismatch(ThickJunctionError):
    """An array argument has the wrong shape for the target mesh."""


# --- solvers ----------------------------------------------------------------

class SolverError(ThickJunctionError):
    """Base class for numerical solve failures."""


class NewtonDiverged(SolverError):
    """Newton iteration exhausted its budget without meeting tolerance."""

    def __init__(self, message, iterations=None, residual=None, step_index=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.step_index = step_index


class LinearSolveFailure(SolverError):
    """Sparse factorization or triangular solve failed."""


class CompatibilityFailure(SolverError):
    """Assembled Neumann data for a pure-Neumann problem does not sum to zero."""


class TruncationTooSmall(SolverError):
    """Far-field fit residual exceeds threshold; enlarge the truncated cell."""


class FitIllConditioned(SolverError):
    """Far-field least-squares fit has too few usable cross-sections."""


# --- corrector / harness ----------------------------------------------------

class OutsideCell(ThickJunctionError):
    """A sample point maps outside every strip of the periodicity cell."""


class MissingCell(ThickJunctionError):
    """A cell solution required by the corrector was not supplied."""


class MalformedCSV(ThickJunctionError):
    """A sweep CSV is empty or does not match the documented schema."""


class AcceptanceFailure(ThickJunctionError):
    """A quantitative acceptance check failed (CLI exit code 4)."""
