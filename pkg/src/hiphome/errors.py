"""Exception types raised across the package."""


class HiphomeError(Exception):
    """Base class for all package errors."""


class DomainError(HiphomeError, ValueError):
    """A coordinate or evaluation point lies outside its admissible set."""


class ResolutionError(HiphomeError):
    """The transverse grid is too coarse for the requested correctors."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (measured residual {residual:.3e})")
        self.residual = residual


class DegeneracyError(HiphomeError):
    """Gram-Schmidt met a (numerically) linearly dependent input function."""

    def __init__(self, index, norm):
        super().__init__(f"degenerate mode at index {index}: residual norm {norm:.3e}")
        self.index = index
        self.norm = norm


class PecletError(HiphomeError):
    """The mesh Peclet number is too large for the unstabilised Galerkin scheme."""

    def __init__(self, peclet, limit):
        super().__init__(f"mesh Peclet number {peclet:.3f} >= {limit:g}; refine the mesh")
        self.peclet = peclet


class SolverError(HiphomeError):
    """A linear solve failed or produced a non-finite state."""


class BlowUpError(SolverError):
    def __init__(self, step):
        super().__init__(f"non-finite state after time step {step}")
        self.step = step


class ConfigError(HiphomeError, ValueError):
    """Invalid experiment configuration."""
