"""Homogenisation-corrector modal bases for hierarchical model reduction.

Transport in a thin channel is reduced to a few coupled 1D problems: P1
finite elements along the channel times a transverse modal expansion. The
modes are either high-order homogenisation correctors orthonormalised by
Gram-Schmidt (``hiphome``) or Neumann cosines (``educated``). Full 2D and
homogenised 1D solvers serve as baselines.
"""

from .corrector import (
    CorrectorSet,
    EffectiveCoefficients,
    compute_correctors,
    oracle_corrector_bvp,
    taylor_dispersion,
    transverse_average,
)
from .errors import (
    BlowUpError,
    ConfigError,
    DegeneracyError,
    DomainError,
    HiphomeError,
    PecletError,
    ResolutionError,
    SolverError,
)
from .fem1d import Mesh1D, build_mesh
from .geometry import ChannelDomain, ProblemData, VelocityProfile, make_profile
from .metrics import ErrorRecord, eoc, errors_on_lattice, fitted_slope, l2_norm, qoi_error
from .modal_basis import ModalBasis, educated_basis, gram_schmidt, hiphome_basis, legendre_basis
from .reduced_solver import ReducedSolution, ReducedSystem, assemble, integrate, solve_steady, step_theta
from .reference_models import (
    ReferenceField2D,
    TimeSpec,
    solve_effective,
    solve_leading_order,
    solve_reference_2d,
)

__version__ = "0.1.0"
