"""
Exception hierarchy for CGOScripts.

Every failure the library can report derives from CGOError so callers (and the
CLI exit-code mapping) can catch the whole family at once.
"""

from typing import Optional, Sequence


class CGOError(Exception):
    """Base class for all CGOScripts errors."""


class GridError(CGOError, ValueError):
    """Invalid torus grid parameters or mismatched grids."""


class DivergentSumError(CGOError, ValueError):
    """The lattice sum requested from gamma_s does not converge."""


class TailToleranceError(CGOError):
    """The requested tail bound needs a truncation radius above the cap."""

    def __init__(self, message: str, radius_needed: float):
        super().__init__(message)
        self.radius_needed = radius_needed


class PartitionError(CGOError, ValueError):
    """Overlapping, out-of-range or grid-misaligned partition cells."""


class BandwidthError(CGOError, ValueError):
    """Bandlimit B does not fit inside the grid's frequency box."""


class ProjectionError(CGOError):
    """Dykstra's alternating projections hit the iteration cap."""


class FrameError(CGOError, ValueError):
    """No admissible (xi, eta) frame, e.g. dimension below 3."""


class GuardError(CGOError):
    """The resonance guard ran out of nudges."""

    def __init__(self, message: str, offending_mode: Sequence[int], t_last: float):
        super().__init__(message)
        self.offending_mode = tuple(int(v) for v in offending_mode)
        self.t_last = t_last


class SolverDivergenceError(CGOError):
    """Neumann iteration residual kept growing; t is too small for this q."""


class SolverIterationError(CGOError):
    """Remainder solver did not reach its tolerance within max_iter."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class NotFoundError(CGOError):
    """choose_N found no N <= N_max meeting the threshold."""

    def __init__(self, message: str, norm_at_max: float):
        super().__init__(message)
        self.norm_at_max = norm_at_max


class CalibrationError(CGOError):
    """calibrate_tau exhausted its doublings without a contraction."""


class PositivityError(CGOError, ValueError):
    """Conductivity is not bounded away from zero."""


class ConfigError(CGOError, ValueError):
    """Run configuration failed schema validation."""


class ProvenanceError(CGOError):
    """Measurement provenance is incompatible with the run configuration."""


class FormatError(CGOError, ValueError):
    """A field, measurement or ordering file is malformed."""
